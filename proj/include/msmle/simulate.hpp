#ifndef MSMLE_SIMULATE_HPP
#define MSMLE_SIMULATE_HPP

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "msmle/model.hpp"

namespace msmle {

enum class BaselineForm { Log1p, Linear };  // log(1 + a t) or a t

struct BaselineSpec {
  BaselineForm form = BaselineForm::Linear;
  double rate = 0.0;

  double cumulative(double t) const;
  double intensity(double t) const;
};

enum class CovariateLaw { Bernoulli, Uniform, Constant };

struct CovariateSpec {
  std::string name;
  CovariateLaw law = CovariateLaw::Uniform;
  double a = 0.0;   // Bernoulli: success prob; Uniform: lower; Constant: value
  double b = 1.0;   // Uniform: upper
};

struct Scenario {
  std::string name;
  int n_states = 0;
  std::vector<Transition> transitions;
  std::vector<BaselineSpec> baselines;        // per transition
  std::vector<Eigen::VectorXd> beta_true;     // per transition
  double sigma2_true = 0.0;                   // scalar random intercept
  std::vector<double> initial_probs;          // per state
  std::vector<CovariateSpec> covariates;
  int n_potential_exams = 6;
  double first_exam_max = 1.0;                // first ~ Unif(0, max)
  double gap_offset = 0.05;                   // gap = offset + Unif(0, gap_max)
  double gap_max = 1.0;
  double study_end = 3.0;

  TransitionGraph graph() const;
  Eigen::VectorXd theta_true() const;         // beta blocks then gamma
  std::vector<std::string> covariate_names() const;
};

// The two built-in study designs.
Scenario three_state_scenario();
Scenario four_state_scenario();

struct TruePath {
  std::vector<double> times;    // transition times, absolute
  std::vector<int> states;      // state entered at each time; states[0] at 0
  double max_inversion_residual = 0.0;
};

struct SimulatedSubject {
  PanelSubject panel;
  TruePath truth;
};

SimulatedSubject simulate_subject(const Scenario& scenario, std::mt19937_64& rng,
                                  const std::string& id);

// n independent subjects on counter-based substreams (seed, replicate, i);
// reproducible and order-independent.
std::vector<SimulatedSubject> simulate_dataset_full(const Scenario& scenario, int n,
                                                    std::uint64_t seed,
                                                    std::uint64_t replicate = 0);
std::vector<PanelSubject> simulate_dataset(const Scenario& scenario, int n,
                                           std::uint64_t seed,
                                           std::uint64_t replicate = 0);

// Exit-time sampler for one sojourn: solves H(T) - H(t0) = E for the total
// exit hazard from `state` entered at t0. Returns infinity if the state is
// absorbing. Exposed for the distributional checks.
struct SojournDraw {
  double exit_time = 0.0;
  int destination = -1;
  double inversion_residual = 0.0;
};
SojournDraw sample_sojourn(const Scenario& scenario, const TransitionGraph& graph,
                           int state, double t0, const Eigen::VectorXd& x, double b,
                           std::mt19937_64& rng);

}  // namespace msmle

#endif  // MSMLE_SIMULATE_HPP
