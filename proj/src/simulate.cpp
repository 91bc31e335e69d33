#include "msmle/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msmle/rng.hpp"

namespace msmle {

double BaselineSpec::cumulative(double t) const {
  if (t <= 0.0) return 0.0;
  return form == BaselineForm::Log1p ? std::log1p(rate * t) : rate * t;
}

double BaselineSpec::intensity(double t) const {
  return form == BaselineForm::Log1p ? rate / (1.0 + rate * t) : rate;
}

TransitionGraph Scenario::graph() const { return TransitionGraph(n_states, transitions); }

Eigen::VectorXd Scenario::theta_true() const {
  int d1 = covariates.empty() ? 0 : static_cast<int>(covariates.size());
  Eigen::VectorXd theta(static_cast<int>(transitions.size()) * d1 + 1);
  int k = 0;
  for (const auto& b : beta_true)
    for (int c = 0; c < b.size(); ++c) theta[k++] = b[c];
  theta[k] = 0.5 * std::log(sigma2_true);  // gamma for a scalar random intercept
  return theta;
}

std::vector<std::string> Scenario::covariate_names() const {
  std::vector<std::string> names;
  for (const auto& c : covariates) names.push_back(c.name);
  return names;
}

Scenario three_state_scenario() {
  Scenario s;
  s.name = "three-state";
  s.n_states = 3;
  s.transitions = {{0, 1}, {1, 2}};
  s.baselines = {{BaselineForm::Log1p, 0.3}, {BaselineForm::Linear, 0.3}};
  s.beta_true.resize(2);
  s.beta_true[0] = Eigen::Vector2d(0.5, -0.5);
  s.beta_true[1] = Eigen::Vector2d(0.4, 0.2);
  s.sigma2_true = 0.8;
  s.initial_probs = {0.5, 0.5, 0.0};
  s.covariates = {{"x1", CovariateLaw::Bernoulli, 0.5, 0.0},
                  {"x2", CovariateLaw::Uniform, 0.0, 1.0}};
  return s;
}

Scenario four_state_scenario() {
  Scenario s;
  s.name = "four-state";
  s.n_states = 4;
  s.transitions = {{0, 1}, {1, 2}, {1, 3}, {2, 3}};
  s.baselines = {{BaselineForm::Log1p, 0.5},
                 {BaselineForm::Linear, 0.5},
                 {BaselineForm::Linear, 0.4},
                 {BaselineForm::Linear, 0.6}};
  s.beta_true.resize(4);
  s.beta_true[0] = Eigen::Vector2d(0.5, -0.5);
  s.beta_true[1] = Eigen::Vector2d(0.4, 0.2);
  s.beta_true[2] = Eigen::Vector2d(0.3, 0.5);
  s.beta_true[3] = Eigen::Vector2d(-0.3, 0.7);
  s.sigma2_true = 0.8;
  s.initial_probs = {0.25, 0.5, 0.25, 0.0};
  s.covariates = {{"x1", CovariateLaw::Bernoulli, 0.5, 0.0},
                  {"x2", CovariateLaw::Uniform, 0.0, 1.0}};
  return s;
}

namespace {

double uniform01(std::mt19937_64& rng) {
  // 53-bit mantissa draw in [0,1)
  return (rng() >> 11) * 0x1.0p-53;
}

}  // namespace

SojournDraw sample_sojourn(const Scenario& scenario, const TransitionGraph& graph,
                           int state, double t0, const Eigen::VectorXd& x, double b,
                           std::mt19937_64& rng) {
  SojournDraw out;
  const auto& exits = graph.exits(state);
  if (exits.empty()) {
    out.exit_time = std::numeric_limits<double>::infinity();
    return out;
  }
  std::vector<double> mult(exits.size());
  for (size_t e = 0; e < exits.size(); ++e)
    mult[e] = std::exp(scenario.beta_true[exits[e]].dot(x) + b);

  auto total_excess = [&](double t) {
    double h = 0.0;
    for (size_t e = 0; e < exits.size(); ++e) {
      const BaselineSpec& base = scenario.baselines[exits[e]];
      h += mult[e] * (base.cumulative(t) - base.cumulative(t0));
    }
    return h;
  };

  double draw = -std::log(1.0 - uniform01(rng));  // Exp(1)

  bool all_linear = true;
  for (int e : exits)
    if (scenario.baselines[e].form != BaselineForm::Linear) all_linear = false;

  double T;
  if (all_linear) {
    double rate = 0.0;
    for (size_t e = 0; e < exits.size(); ++e)
      rate += mult[e] * scenario.baselines[exits[e]].rate;
    T = t0 + draw / rate;
  } else if (exits.size() == 1) {
    // Single log-form exit: exact inversion.
    const BaselineSpec& base = scenario.baselines[exits[0]];
    double arg = std::min(draw / mult[0], 690.0);
    T = ((1.0 + base.rate * t0) * std::exp(arg) - 1.0) / base.rate;
  } else {
    // Mixed exits: bracket by a single-component upper bound, bisect in
    // asinh scale, then Newton polish.
    double hi = t0;
    for (size_t e = 0; e < exits.size(); ++e) {
      const BaselineSpec& base = scenario.baselines[exits[e]];
      double bound;
      if (base.form == BaselineForm::Linear) {
        bound = t0 + draw / (mult[e] * base.rate);
      } else {
        double arg = std::min(draw / mult[e], 690.0);
        bound = ((1.0 + base.rate * t0) * std::exp(arg) - 1.0) / base.rate;
      }
      hi = std::max(hi, bound);
    }
    double alo = std::asinh(t0), ahi = std::asinh(hi);
    for (int it = 0; it < 200; ++it) {
      double amid = 0.5 * (alo + ahi);
      if (total_excess(std::sinh(amid)) < draw)
        alo = amid;
      else
        ahi = amid;
    }
    T = std::sinh(0.5 * (alo + ahi));
    for (int it = 0; it < 6; ++it) {  // Newton polish
      double f = total_excess(T) - draw;
      double fp = 0.0;
      for (size_t e = 0; e < exits.size(); ++e)
        fp += mult[e] * scenario.baselines[exits[e]].intensity(T);
      if (fp <= 0.0) break;
      double step = f / fp;
      T -= step;
      if (T < t0) T = t0;
      if (std::abs(step) < 1e-15 * std::max(1.0, T)) break;
    }
  }
  out.exit_time = T;
  out.inversion_residual = std::abs(total_excess(T) - draw);

  // Destination by intensity ratio at the exit instant.
  std::vector<double> w(exits.size());
  double wsum = 0.0;
  for (size_t e = 0; e < exits.size(); ++e) {
    w[e] = mult[e] * scenario.baselines[exits[e]].intensity(T);
    wsum += w[e];
  }
  double u = uniform01(rng) * wsum;
  size_t pick = 0;
  double acc = 0.0;
  for (size_t e = 0; e < exits.size(); ++e) {
    acc += w[e];
    if (u <= acc) {
      pick = e;
      break;
    }
    pick = e;
  }
  out.destination = graph.transitions()[exits[pick]].to;
  return out;
}

SimulatedSubject simulate_subject(const Scenario& scenario, std::mt19937_64& rng,
                                  const std::string& id) {
  TransitionGraph graph = scenario.graph();

  // Draw order is fixed: covariates, random effect, initial state,
  // examination schedule, then the path.
  Eigen::VectorXd x(scenario.covariates.size());
  for (size_t c = 0; c < scenario.covariates.size(); ++c) {
    const CovariateSpec& spec = scenario.covariates[c];
    switch (spec.law) {
      case CovariateLaw::Bernoulli:
        x[c] = uniform01(rng) < spec.a ? 1.0 : 0.0;
        break;
      case CovariateLaw::Uniform:
        x[c] = spec.a + (spec.b - spec.a) * uniform01(rng);
        break;
      case CovariateLaw::Constant:
        x[c] = spec.a;
        break;
    }
  }
  double b = std::sqrt(scenario.sigma2_true) * [&] {
    // Box-Muller, deterministic across platforms.
    double u1 = uniform01(rng), u2 = uniform01(rng);
    if (u1 <= 0.0) u1 = std::numeric_limits<double>::min();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }();

  int state = 0;
  {
    double u = uniform01(rng), acc = 0.0;
    for (size_t k = 0; k < scenario.initial_probs.size(); ++k) {
      acc += scenario.initial_probs[k];
      if (u <= acc) {
        state = static_cast<int>(k);
        break;
      }
      state = static_cast<int>(k);
    }
  }

  std::vector<double> exams;
  double t = scenario.first_exam_max * (1.0 - uniform01(rng));  // in (0, max]
  for (int v = 0; v < scenario.n_potential_exams; ++v) {
    if (v > 0) t += scenario.gap_offset + scenario.gap_max * uniform01(rng);
    if (t <= scenario.study_end) exams.push_back(t);
  }

  SimulatedSubject out;
  out.truth.times.push_back(0.0);
  out.truth.states.push_back(state);
  double now = 0.0;
  int current = state;
  while (!graph.is_absorbing(current) && now <= scenario.study_end) {
    SojournDraw d = sample_sojourn(scenario, graph, current, now, x, b, rng);
    out.truth.max_inversion_residual =
        std::max(out.truth.max_inversion_residual, d.inversion_residual);
    if (!std::isfinite(d.exit_time)) break;
    now = d.exit_time;
    if (now > scenario.study_end) break;
    current = d.destination;
    out.truth.times.push_back(now);
    out.truth.states.push_back(current);
  }

  auto state_at = [&](double time) {
    int s = out.truth.states[0];
    for (size_t k = 0; k < out.truth.times.size(); ++k)
      if (out.truth.times[k] <= time) s = out.truth.states[k];
    return s;
  };

  out.panel.id = id;
  out.panel.exam_times.push_back(0.0);
  out.panel.states.push_back(state);
  for (double e : exams) {
    out.panel.exam_times.push_back(e);
    out.panel.states.push_back(state_at(e));
  }
  out.panel.x_path = CovariatePath::constant(x);
  out.panel.z_path = CovariatePath::constant(Eigen::VectorXd::Ones(1));
  return out;
}

std::vector<SimulatedSubject> simulate_dataset_full(const Scenario& scenario, int n,
                                                    std::uint64_t seed,
                                                    std::uint64_t replicate) {
  if (n < 1) throw data_error("dataset size must be at least 1");
  std::vector<SimulatedSubject> out(n);
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng = substream(seed, replicate, static_cast<std::uint64_t>(i));
    out[i] = simulate_subject(scenario, rng, std::to_string(i + 1));
  }
  return out;
}

std::vector<PanelSubject> simulate_dataset(const Scenario& scenario, int n,
                                           std::uint64_t seed, std::uint64_t replicate) {
  std::vector<SimulatedSubject> full = simulate_dataset_full(scenario, n, seed, replicate);
  std::vector<PanelSubject> panels;
  panels.reserve(full.size());
  for (auto& s : full) panels.push_back(std::move(s.panel));
  return panels;
}

}  // namespace msmle
