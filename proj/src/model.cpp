#include "msmle/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace msmle {

std::string transition_label(const Transition& t) {
  return std::to_string(t.from + 1) + "->" + std::to_string(t.to + 1);
}

TransitionGraph::TransitionGraph(int n_states, std::vector<Transition> transitions)
    : n_states_(n_states), transitions_(std::move(transitions)) {
  if (n_states_ <= 0) throw data_error("transition graph needs at least one state");
  index_.assign(n_states_ * n_states_, -1);
  exits_.assign(n_states_, {});
  for (int d = 0; d < static_cast<int>(transitions_.size()); ++d) {
    const Transition& t = transitions_[d];
    if (t.from < 0 || t.from >= n_states_ || t.to < 0 || t.to >= n_states_)
      throw data_error("transition " + transition_label(t) + " references unknown state");
    if (t.from == t.to)
      throw data_error("self-transition " + transition_label(t) + " is not allowed");
    if (index_[t.from * n_states_ + t.to] >= 0)
      throw data_error("duplicate transition " + transition_label(t));
    index_[t.from * n_states_ + t.to] = d;
    exits_[t.from].push_back(d);
  }

  // Reflexive-transitive closure by DFS from each state.
  closure_.assign(n_states_ * n_states_, 0);
  for (int s = 0; s < n_states_; ++s) {
    std::vector<int> stack{s};
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      if (closure_[s * n_states_ + v]) continue;
      closure_[s * n_states_ + v] = 1;
      for (int d : exits_[v]) stack.push_back(transitions_[d].to);
    }
  }
  // Acyclic iff no two distinct states reach each other.
  for (int a = 0; a < n_states_; ++a)
    for (int b = a + 1; b < n_states_; ++b)
      if (closure_[a * n_states_ + b] && closure_[b * n_states_ + a])
        throw data_error("transition graph has a cycle through states " +
                         std::to_string(a + 1) + " and " + std::to_string(b + 1));
}

CovariatePath::CovariatePath(std::vector<double> times, Eigen::MatrixXd values)
    : times_(std::move(times)), values_(std::move(values)) {
  if (times_.empty() || static_cast<int>(times_.size()) != values_.cols())
    throw data_error("covariate path needs one value column per breakpoint");
  for (size_t i = 1; i < times_.size(); ++i)
    if (times_[i] <= times_[i - 1]) throw data_error("covariate breakpoints must increase");
}

CovariatePath CovariatePath::constant(const Eigen::VectorXd& value) {
  return CovariatePath({0.0}, value);
}

int CovariatePath::segment_at(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 0;  // before the first breakpoint: clamp
  return static_cast<int>(it - times_.begin()) - 1;
}

Eigen::VectorXd CovariatePath::at(double t) const { return values_.col(segment_at(t)); }

std::vector<PanelViolation> validate_panel(const TransitionGraph& graph,
                                           const PanelSubject& subject) {
  std::vector<PanelViolation> out;
  auto add = [&](int l, const std::string& rule, const std::string& msg) {
    out.push_back({subject.id, l, rule, msg});
  };
  if (subject.exam_times.size() != subject.states.size()) {
    add(0, "length-mismatch", "states and exam times have different lengths");
    return out;
  }
  if (subject.exam_times.empty()) {
    add(0, "empty", "no examinations");
    return out;
  }
  if (subject.exam_times.front() != 0.0)
    add(0, "baseline-time", "first examination time must be 0");
  for (size_t l = 1; l < subject.exam_times.size(); ++l)
    if (subject.exam_times[l] <= subject.exam_times[l - 1])
      add(static_cast<int>(l), "nonmonotone-times", "examination times must increase");
  for (size_t l = 0; l < subject.states.size(); ++l)
    if (subject.states[l] < 0 || subject.states[l] >= graph.n_states())
      add(static_cast<int>(l), "unknown-state",
          "state " + std::to_string(subject.states[l] + 1) + " outside 1.." +
              std::to_string(graph.n_states()));
  if (!out.empty()) return out;
  for (size_t l = 1; l < subject.states.size(); ++l) {
    int a = subject.states[l - 1], b = subject.states[l];
    if (a != b && !graph.reachable(a, b))
      add(static_cast<int>(l), "infeasible-pair",
          "no feasible path from state " + std::to_string(a + 1) + " to state " +
              std::to_string(b + 1));
  }
  return out;
}

ParameterSet ParameterSet::zero(int n_transitions, int d1, int d2) {
  ParameterSet p;
  p.beta.assign(n_transitions, Eigen::VectorXd::Zero(d1));
  p.gamma = Eigen::VectorXd::Zero(gamma_dim(d2));
  return p;
}

int ParameterSet::re_dim() const {
  // d3 = d2 (d2+1) / 2
  int d3 = static_cast<int>(gamma.size());
  int d2 = static_cast<int>(std::floor((std::sqrt(8.0 * d3 + 1.0) - 1.0) / 2.0 + 0.5));
  if (gamma_dim(d2) != d3) throw numeric_error("gamma has no valid dimension");
  return d2;
}

Eigen::MatrixXd ParameterSet::cholesky_factor() const {
  int d2 = re_dim();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d2, d2);
  for (int i = 0; i < d2; ++i) L(i, i) = std::exp(gamma[i]);
  int k = d2;
  for (int i = 1; i < d2; ++i)
    for (int j = 0; j < i; ++j) L(i, j) = gamma[k++];
  return L;
}

Eigen::MatrixXd ParameterSet::sigma() const {
  Eigen::MatrixXd L = cholesky_factor();
  return L * L.transpose();
}

Eigen::VectorXd ParameterSet::gamma_from_sigma(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw numeric_error("covariance is not positive definite");
  Eigen::MatrixXd L = llt.matrixL();
  int d2 = static_cast<int>(sigma.rows());
  Eigen::VectorXd g(gamma_dim(d2));
  for (int i = 0; i < d2; ++i) g[i] = std::log(L(i, i));
  int k = d2;
  for (int i = 1; i < d2; ++i)
    for (int j = 0; j < i; ++j) g[k++] = L(i, j);
  return g;
}

int BaselineHazards::n_active() const {
  int n = 0;
  for (unsigned char a : active) n += (a != 0);
  return n;
}

double BaselineHazards::cumulative(int transition, double t) const {
  double sum = 0.0;
  for (size_t s = 0; s < grid.size() && grid[s] <= t; ++s)
    if (active[s]) sum += jumps[transition][s];
  return sum;
}

void BaselineHazards::set_uniform_jumps(double value) {
  for (auto& j : jumps) std::fill(j.begin(), j.end(), value);
}

BaselineHazards build_grid(const std::vector<PanelSubject>& subjects, int n_transitions) {
  std::set<double> times;
  for (const auto& subj : subjects)
    for (double t : subj.exam_times)
      if (t > 0.0) times.insert(t);
  if (times.empty()) throw data_error("no observations");
  BaselineHazards b;
  b.grid.assign(times.begin(), times.end());
  b.jumps.assign(n_transitions, std::vector<double>(b.grid.size(), 0.0));
  b.active.assign(b.grid.size(), 1);
  return b;
}

std::vector<std::string> parameter_names(const TransitionGraph& graph,
                                         const std::vector<std::string>& covariate_names,
                                         int d2) {
  std::vector<std::string> names;
  for (const Transition& t : graph.transitions())
    for (const auto& c : covariate_names)
      names.push_back("beta[" + transition_label(t) + "][" + c + "]");
  for (int i = 0; i < ParameterSet::gamma_dim(d2); ++i)
    names.push_back("gamma[" + std::to_string(i + 1) + "]");
  return names;
}

}  // namespace msmle
