#include "msmle/em.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <iostream>
#include <sstream>
#include <thread>

namespace msmle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Static per-subject data reused across EM iterations.
struct SubjectStatic {
  Eigen::MatrixXd x_at;   // d1 x m, or d1 x 1 when the path is constant
  Eigen::MatrixXd z_at;   // d2 x m, or d2 x 1
  double last_exam = 0.0;

  const double* x_col(int s) const {
    return x_at.cols() == 1 ? x_at.data() : x_at.data() + static_cast<long>(s) * x_at.rows();
  }
  const double* z_col(int s) const {
    return z_at.cols() == 1 ? z_at.data() : z_at.data() + static_cast<long>(s) * z_at.rows();
  }
  bool z_const() const { return z_at.cols() == 1; }
};

struct IntervalSpan {
  int begin = 0;  // window positions [begin, end)
  int end = 0;
  int from_state = 0;
  int to_state = 0;
};

// Scratch buffers for one subject pass; one instance per worker thread.
struct PassWork {
  std::vector<double> base;     // wlen x nD: jump * exp(beta.X)
  std::vector<double> lam;      // wlen x nD
  std::vector<double> em1;      // wlen x nD: 1 - exp(-lam)
  std::vector<double> eod;      // wlen x nD: exp(-(rowsum - lam)), other exits idle
  std::vector<double> rowp;     // wlen x K: exp(-rowsum), no exit fires
  std::vector<double> prefix;   // (r+1) x K
  std::vector<double> suffix;   // (r+2) x K
  std::vector<double> terms;    // Q x nD x wlen
  std::vector<double> gq;       // Q (z constant) or Q x wlen
  std::vector<double> likq;     // Q
  std::vector<IntervalSpan> spans;
};

struct PassResult {
  double loglik = 0.0;
  bool zero_likelihood = false;
};

class Engine {
 public:
  Engine(const TransitionGraph& graph, const std::vector<PanelSubject>& subjects)
      : graph_(graph), subjects_(subjects) {
    K_ = graph.n_states();
    nD_ = graph.n_transitions();
    d1_ = subjects.empty() ? 0 : subjects[0].x_path.dim();
    d2_ = subjects.empty() ? 0 : subjects[0].z_path.dim();
  }

  void build_static(const BaselineHazards& baseline) {
    int m = baseline.grid_size();
    statics_.resize(subjects_.size());
    for (size_t i = 0; i < subjects_.size(); ++i) {
      const PanelSubject& s = subjects_[i];
      SubjectStatic& st = statics_[i];
      st.last_exam = s.last_exam();
      if (s.x_path.is_constant()) {
        st.x_at = s.x_path.values().col(0);
      } else {
        st.x_at.resize(d1_, m);
        for (int g = 0; g < m; ++g) st.x_at.col(g) = s.x_path.at(baseline.grid[g]);
      }
      if (s.z_path.is_constant()) {
        st.z_at = s.z_path.values().col(0);
      } else {
        st.z_at.resize(d2_, m);
        for (int g = 0; g < m; ++g) st.z_at.col(g) = s.z_path.at(baseline.grid[g]);
      }
    }
    grid_ = baseline.grid;
  }

  // Active grid positions and per-subject windows/interval spans; call after
  // any change to the active mask.
  void index_active(const BaselineHazards& baseline) {
    active_.clear();
    for (int s = 0; s < baseline.grid_size(); ++s)
      if (baseline.active[s]) active_.push_back(s);
    window_len_.resize(subjects_.size());
    spans_.resize(subjects_.size());
    for (size_t i = 0; i < subjects_.size(); ++i) {
      const PanelSubject& subj = subjects_[i];
      int wlen = upper_pos(subj.last_exam());
      window_len_[i] = wlen;
      auto& spans = spans_[i];
      spans.clear();
      for (int l = 1; l <= subj.n_intervals(); ++l) {
        IntervalSpan sp;
        sp.begin = upper_pos(subj.exam_times[l - 1]);
        sp.end = upper_pos(subj.exam_times[l]);
        sp.from_state = subj.states[l - 1];
        sp.to_state = subj.states[l];
        spans.push_back(sp);
      }
    }
  }

  const std::vector<int>& active() const { return active_; }

  // One subject pass: per-node interval products; optionally the expected
  // latent counts. Fills the subject's slots in `cache` when given.
  PassResult pass_subject(int i, const ParameterSet& params, const BaselineHazards& baseline,
                          const Eigen::MatrixXd& bnodes, const Eigen::VectorXd& weights,
                          bool use_re, bool compute_terms, EStepCache* cache,
                          PassWork& w) const {
    const SubjectStatic& st = statics_[i];
    const int wlen = window_len_[i];
    const int Q = static_cast<int>(weights.size());
    const auto& spans = spans_[i];

    // base rate per (window position, transition)
    w.base.assign(static_cast<size_t>(wlen) * nD_, 0.0);
    for (int t = 0; t < wlen; ++t) {
      int s = active_[t];
      const double* x = st.x_col(s);
      for (int d = 0; d < nD_; ++d) {
        double jump = baseline.jumps[d][s];
        if (jump <= 0.0) continue;
        double eta = 0.0;
        const Eigen::VectorXd& beta = params.beta[d];
        for (int c = 0; c < d1_; ++c) eta += beta[c] * x[c];
        w.base[static_cast<size_t>(t) * nD_ + d] = jump * std::exp(eta);
      }
    }

    // exp(b.Z) factors per node (and per position when Z varies in time)
    const bool zc = st.z_const() || !use_re;
    w.gq.assign(zc ? Q : static_cast<size_t>(Q) * std::max(wlen, 1), 1.0);
    if (use_re) {
      for (int q = 0; q < Q; ++q) {
        if (zc) {
          double bz = 0.0;
          const double* z = st.z_col(0);
          for (int c = 0; c < d2_; ++c) bz += bnodes(c, q) * z[c];
          w.gq[q] = std::exp(bz);
        } else {
          for (int t = 0; t < wlen; ++t) {
            double bz = 0.0;
            const double* z = st.z_col(active_[t]);
            for (int c = 0; c < d2_; ++c) bz += bnodes(c, q) * z[c];
            w.gq[static_cast<size_t>(q) * wlen + t] = std::exp(bz);
          }
        }
      }
    }

    w.likq.assign(Q, 1.0);
    if (compute_terms) w.terms.assign(static_cast<size_t>(Q) * nD_ * std::max(wlen, 1), 0.0);

    w.lam.resize(static_cast<size_t>(wlen) * nD_);
    w.em1.resize(static_cast<size_t>(wlen) * nD_);
    w.eod.resize(static_cast<size_t>(wlen) * nD_);
    w.rowp.resize(static_cast<size_t>(wlen) * K_);

    for (int q = 0; q < Q; ++q) {
      double lik = 1.0;
      for (const IntervalSpan& sp : spans) {
        int r = sp.end - sp.begin;
        if (r == 0) {
          if (sp.from_state != sp.to_state) lik = 0.0;
          if (lik == 0.0) break;
          continue;
        }
        // per-point event quantities, kept division-free so extreme quadrature
        // nodes (huge lambda, exp underflow) stay finite
        for (int t = sp.begin; t < sp.end; ++t) {
          double g = zc ? w.gq[q] : w.gq[static_cast<size_t>(q) * wlen + t];
          const double* bt = &w.base[static_cast<size_t>(t) * nD_];
          double* lt = &w.lam[static_cast<size_t>(t) * nD_];
          double* m1 = &w.em1[static_cast<size_t>(t) * nD_];
          double* od = &w.eod[static_cast<size_t>(t) * nD_];
          double* rp = &w.rowp[static_cast<size_t>(t) * K_];
          for (int d = 0; d < nD_; ++d) lt[d] = bt[d] > 0.0 ? bt[d] * g : 0.0;
          for (int j = 0; j < K_; ++j) {
            const auto& exits = graph_.exits(j);
            if (exits.empty()) {
              rp[j] = 1.0;
              continue;
            }
            if (exits.size() == 1) {
              int d = exits[0];
              m1[d] = -std::expm1(-lt[d]);
              od[d] = 1.0;
              rp[j] = 1.0 - m1[d];
              continue;
            }
            double rowsum = 0.0;
            for (int d : exits) rowsum += lt[d];
            rp[j] = std::exp(-rowsum);
            for (int d : exits) {
              m1[d] = -std::expm1(-lt[d]);
              od[d] = std::exp(lt[d] - rowsum);
            }
          }
        }
        double plik = forward(sp, w);
        if (plik <= 0.0) {
          lik = 0.0;
          break;
        }
        lik *= plik;
        if (compute_terms) {
          backward(sp, w);
          accumulate_terms(sp, q, wlen, plik, w);
        }
      }
      w.likq[q] = lik;
    }

    // Posterior over nodes and reductions.
    double marginal = 0.0;
    for (int q = 0; q < Q; ++q) marginal += weights[q] * w.likq[q];
    PassResult out;
    if (marginal <= 0.0) {
      out.loglik = kNegInf;
      out.zero_likelihood = true;
      return out;
    }
    out.loglik = std::log(marginal);

    if (cache != nullptr) {
      Eigen::VectorXd post(Q);
      for (int q = 0; q < Q; ++q) post[q] = weights[q] * w.likq[q] / marginal;
      cache->post_weights[i] = post;
      cache->logliks[i] = out.loglik;
      cache->window_len[i] = wlen;

      if (compute_terms) {
        Eigen::MatrixXd ew = Eigen::MatrixXd::Zero(nD_, std::max(wlen, 1));
        for (int q = 0; q < Q; ++q) {
          double pw = post[q];
          if (pw == 0.0) continue;
          const double* tq = &w.terms[static_cast<size_t>(q) * nD_ * std::max(wlen, 1)];
          for (int d = 0; d < nD_; ++d)
            for (int t = 0; t < wlen; ++t) ew(d, t) += pw * tq[static_cast<size_t>(d) * wlen + t];
        }
        cache->expected_w[i] = ew;

        Eigen::VectorXd eexp(std::max(wlen, 1));
        if (zc) {
          double v = 0.0;
          for (int q = 0; q < Q; ++q) v += post[q] * w.gq[q];
          eexp.setConstant(v);
        } else {
          eexp.setZero();
          for (int q = 0; q < Q; ++q)
            for (int t = 0; t < wlen; ++t)
              eexp[t] += post[q] * w.gq[static_cast<size_t>(q) * wlen + t];
        }
        cache->expected_exp_bz[i] = eexp;

        Eigen::MatrixXd bb = Eigen::MatrixXd::Zero(d2_, d2_);
        if (use_re)
          for (int q = 0; q < Q; ++q)
            bb += post[q] * (bnodes.col(q) * bnodes.col(q).transpose());
        cache->expected_bb[i] = bb;
      }
    }
    return out;
  }

  // Row-vector propagation through the interval's event matrices, event-only
  // diagonal. prefix[t] = e_from . M_1 ... M_t.
  double forward(const IntervalSpan& sp, PassWork& w) const {
    int r = sp.end - sp.begin;
    w.prefix.assign(static_cast<size_t>(r + 1) * K_, 0.0);
    w.prefix[sp.from_state] = 1.0;
    for (int t = 0; t < r; ++t) {
      const double* p = &w.prefix[static_cast<size_t>(t) * K_];
      double* np = &w.prefix[static_cast<size_t>(t + 1) * K_];
      apply_row(sp.begin + t, p, np, w);
    }
    return w.prefix[static_cast<size_t>(r) * K_ + sp.to_state];
  }

  // suffix[t] = M_t ... M_r . e_to for t in 1..r+1 (suffix[r+1] = e_to).
  void backward(const IntervalSpan& sp, PassWork& w) const {
    int r = sp.end - sp.begin;
    w.suffix.assign(static_cast<size_t>(r + 2) * K_, 0.0);
    w.suffix[static_cast<size_t>(r + 1) * K_ + sp.to_state] = 1.0;
    for (int t = r; t >= 1; --t) {
      const double* c = &w.suffix[static_cast<size_t>(t + 1) * K_];
      double* nc = &w.suffix[static_cast<size_t>(t) * K_];
      apply_col(sp.begin + t - 1, c, nc, w);
    }
  }

  void accumulate_terms(const IntervalSpan& sp, int q, int wlen, double plik,
                        PassWork& w) const {
    double* tq = &w.terms[static_cast<size_t>(q) * nD_ * std::max(wlen, 1)];
    int r = sp.end - sp.begin;
    for (int t = 1; t <= r; ++t) {
      int pos = sp.begin + t - 1;
      const double* lt = &w.lam[static_cast<size_t>(pos) * nD_];
      const double* od = &w.eod[static_cast<size_t>(pos) * nD_];
      const double* pre = &w.prefix[static_cast<size_t>(t - 1) * K_];
      const double* sufin = &w.suffix[static_cast<size_t>(t) * K_];
      const double* sufex = &w.suffix[static_cast<size_t>(t + 1) * K_];
      for (int d = 0; d < nD_; ++d) {
        if (lt[d] <= 0.0) continue;
        int j = graph_.transitions()[d].from;
        int k = graph_.transitions()[d].to;
        double term1 = lt[d] * (1.0 - pre[j] * sufin[j] / plik);
        double term2 = (pre[j] * sufex[k] / plik) * lt[d] * od[d];
        double v = term1 + term2;
        tq[static_cast<size_t>(d) * wlen + pos] = v > 0.0 ? v : 0.0;
      }
    }
  }

  int upper_pos(double t) const {
    // number of active positions with grid value <= t
    int lo = 0, hi = static_cast<int>(active_.size());
    while (lo < hi) {
      int mid = (lo + hi) / 2;
      if (grid_[active_[mid]] <= t)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

  const TransitionGraph& graph_;
  const std::vector<PanelSubject>& subjects_;
  int K_ = 0, nD_ = 0, d1_ = 0, d2_ = 0;
  std::vector<SubjectStatic> statics_;
  std::vector<double> grid_;
  std::vector<int> active_;
  std::vector<int> window_len_;
  std::vector<std::vector<IntervalSpan>> spans_;

 private:
  // np = p . M for the event matrix at window position `pos`.
  void apply_row(int pos, const double* p, double* np, PassWork& w) const {
    const double* m1 = &w.em1[static_cast<size_t>(pos) * nD_];
    const double* od = &w.eod[static_cast<size_t>(pos) * nD_];
    const double* lt = &w.lam[static_cast<size_t>(pos) * nD_];
    const double* rp = &w.rowp[static_cast<size_t>(pos) * K_];
    for (int j = 0; j < K_; ++j) np[j] = p[j] * rp[j];
    for (int d = 0; d < nD_; ++d) {
      if (lt[d] <= 0.0) continue;
      const Transition& tr = graph_.transitions()[d];
      np[tr.to] += p[tr.from] * m1[d] * od[d];
    }
  }

  // nc = M . c
  void apply_col(int pos, const double* c, double* nc, PassWork& w) const {
    const double* m1 = &w.em1[static_cast<size_t>(pos) * nD_];
    const double* od = &w.eod[static_cast<size_t>(pos) * nD_];
    const double* lt = &w.lam[static_cast<size_t>(pos) * nD_];
    const double* rp = &w.rowp[static_cast<size_t>(pos) * K_];
    for (int j = 0; j < K_; ++j) nc[j] = c[j] * rp[j];
    for (int d = 0; d < nD_; ++d) {
      if (lt[d] <= 0.0) continue;
      const Transition& tr = graph_.transitions()[d];
      nc[tr.from] += m1[d] * od[d] * c[tr.to];
    }
  }
};

void run_parallel(int n, int threads, const std::function<void(int, int)>& body) {
  if (threads <= 1 || n <= 1) {
    body(0, n);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

// Full E-step over all subjects with ordered reduction into the cache.
void e_step_impl(const Engine& eng, const ParameterSet& params,
                 const BaselineHazards& baseline, const Eigen::MatrixXd& bnodes,
                 const Eigen::VectorXd& weights, bool use_re, int threads,
                 EStepCache* cache) {
  int n = static_cast<int>(eng.subjects_.size());
  cache->n_transitions = eng.nD_;
  cache->active_grid = eng.active_;
  cache->post_weights.resize(n);
  cache->expected_w.resize(n);
  cache->expected_exp_bz.resize(n);
  cache->expected_bb.resize(n);
  cache->logliks.assign(n, 0.0);
  cache->window_len.assign(n, 0);

  std::vector<char> failed(n, 0);
  run_parallel(n, threads, [&](int lo, int hi) {
    PassWork work;
    for (int i = lo; i < hi; ++i) {
      PassResult r = eng.pass_subject(i, params, baseline, bnodes, weights, use_re,
                                      /*compute_terms=*/true, cache, work);
      if (r.zero_likelihood) failed[i] = 1;
    }
  });

  std::string bad;
  for (int i = 0; i < n; ++i)
    if (failed[i]) bad += (bad.empty() ? "" : ", ") + eng.subjects_[i].id;
  if (!bad.empty())
    throw numeric_error("observed path has zero probability for subjects: " + bad);

  // Ordered reductions (deterministic for any thread count).
  int na = static_cast<int>(eng.active_.size());
  cache->total_loglik = 0.0;
  cache->sum_w = Eigen::MatrixXd::Zero(eng.nD_, std::max(na, 1));
  cache->sum_wx.assign(eng.nD_, Eigen::VectorXd::Zero(eng.d1_));
  for (int i = 0; i < n; ++i) {
    cache->total_loglik += cache->logliks[i];
    int wlen = cache->window_len[i];
    const Eigen::MatrixXd& ew = cache->expected_w[i];
    for (int d = 0; d < eng.nD_; ++d)
      for (int t = 0; t < wlen; ++t) cache->sum_w(d, t) += ew(d, t);
    if (eng.d1_ > 0) {
      const SubjectStatic& st = eng.statics_[i];
      for (int t = 0; t < wlen; ++t) {
        const double* x = st.x_col(eng.active_[t]);
        for (int d = 0; d < eng.nD_; ++d) {
          double v = ew(d, t);
          if (v == 0.0) continue;
          for (int c = 0; c < eng.d1_; ++c) cache->sum_wx[d][c] += v * x[c];
        }
      }
    }
  }
}

// Risk-set weighted covariate moments at beta, per transition and active
// position: D(t) = sum_i w_it, SX(t) = sum_i w_it x_it, SXX optional.
struct BetaMoments {
  Eigen::VectorXd denom;
  Eigen::MatrixXd sx;                   // d1 x na
  std::vector<Eigen::MatrixXd> sxx;     // per active position, d1 x d1
};

void weighted_moments(const Engine& eng, const EStepCache& cache,
                      const Eigen::VectorXd& beta, int transition, bool with_xx,
                      BetaMoments* out) {
  int na = static_cast<int>(cache.active_grid.size());
  out->denom = Eigen::VectorXd::Zero(na);
  out->sx = Eigen::MatrixXd::Zero(eng.d1_, na);
  if (with_xx) out->sxx.assign(na, Eigen::MatrixXd::Zero(eng.d1_, eng.d1_));
  (void)transition;
  int n = static_cast<int>(eng.subjects_.size());
  for (int i = 0; i < n; ++i) {
    int wlen = cache.window_len[i];
    const SubjectStatic& st = eng.statics_[i];
    const Eigen::VectorXd& eexp = cache.expected_exp_bz[i];
    for (int t = 0; t < wlen; ++t) {
      const double* x = st.x_col(cache.active_grid[t]);
      double eta = 0.0;
      for (int c = 0; c < eng.d1_; ++c) eta += beta[c] * x[c];
      double w = std::exp(eta) * eexp[t];
      out->denom[t] += w;
      for (int c = 0; c < eng.d1_; ++c) out->sx(c, t) += w * x[c];
      if (with_xx)
        for (int a = 0; a < eng.d1_; ++a)
          for (int b = 0; b <= a; ++b) out->sxx[t](a, b) += w * x[a] * x[b];
    }
  }
  if (with_xx)
    for (auto& m : out->sxx) m = m.selfadjointView<Eigen::Lower>();
}

void m_lambda_impl(const Engine& eng, const EStepCache& cache, const ParameterSet& params,
                   BaselineHazards* baseline) {
  int na = static_cast<int>(cache.active_grid.size());
  for (int d = 0; d < eng.nD_; ++d) {
    BetaMoments mom;
    weighted_moments(eng, cache, params.beta[d], d, /*with_xx=*/false, &mom);
    for (int t = 0; t < na; ++t) {
      int s = cache.active_grid[t];
      double num = cache.sum_w(d, t);
      double den = mom.denom[t];
      baseline->jumps[d][s] = (num > 0.0 && den > 0.0) ? num / den : 0.0;
    }
  }
}

void m_beta_impl(const Engine& eng, const EStepCache& cache, ParameterSet* params,
                 int newton_steps, std::vector<std::string>* flags) {
  if (eng.d1_ == 0) return;
  int na = static_cast<int>(cache.active_grid.size());
  for (int d = 0; d < eng.nD_; ++d) {
    double total_w = cache.sum_w.row(d).sum();
    if (total_w <= 1e-12) {
      if (flags)
        flags->push_back("no expected events for transition " +
                         transition_label(eng.graph_.transitions()[d]) +
                         "; beta left at its current value");
      continue;
    }
    for (int step = 0; step < newton_steps; ++step) {
      BetaMoments mom;
      weighted_moments(eng, cache, params->beta[d], d, /*with_xx=*/true, &mom);
      Eigen::VectorXd score = cache.sum_wx[d];
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(eng.d1_, eng.d1_);
      double obj0 = 0.0;
      for (int t = 0; t < na; ++t) {
        double nw = cache.sum_w(d, t);
        if (nw == 0.0) continue;
        double den = mom.denom[t];
        Eigen::VectorXd xbar = mom.sx.col(t) / den;
        score -= nw * xbar;
        hess += nw * (mom.sxx[t] / den - xbar * xbar.transpose());
        obj0 -= nw * std::log(den);
      }
      obj0 += cache.sum_wx[d].dot(params->beta[d]);
      if (score.norm() < 1e-12) break;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      if (ldlt.info() != Eigen::Success ||
          ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
        std::cerr << "DBG hess\n" << hess << "\nscore " << score.transpose()
                  << " total_w " << total_w << " obj0 " << obj0 << "\n";
        throw numeric_error("singular Hessian for transition " +
                            transition_label(eng.graph_.transitions()[d]) +
                            " (collinear covariates)");
      }
      Eigen::VectorXd delta = ldlt.solve(score);

      // Half the step while the profiled complete-data objective decreases.
      auto objective = [&](const Eigen::VectorXd& beta) {
        BetaMoments m2;
        weighted_moments(eng, cache, beta, d, /*with_xx=*/false, &m2);
        double obj = cache.sum_wx[d].dot(beta);
        for (int t = 0; t < na; ++t) {
          double nw = cache.sum_w(d, t);
          if (nw == 0.0) continue;
          obj -= nw * std::log(m2.denom[t]);
        }
        return obj;
      };
      Eigen::VectorXd candidate = params->beta[d] + delta;
      int halvings = 0;
      while (objective(candidate) < obj0 && halvings < 30) {
        delta *= 0.5;
        candidate = params->beta[d] + delta;
        ++halvings;
      }
      if (halvings == 30) candidate = params->beta[d];
      params->beta[d] = candidate;
    }
  }
}


// Prune points whose jumps all fall below the threshold. Returns the number
// of points deactivated.
int prune(const Engine& eng, double threshold, BaselineHazards* baseline) {
  if (threshold <= 0.0) return 0;
  int removed = 0;
  for (int s = 0; s < baseline->grid_size(); ++s) {
    if (!baseline->active[s]) continue;
    bool keep = false;
    for (int d = 0; d < eng.nD_; ++d)
      if (baseline->jumps[d][s] >= threshold) {
        keep = true;
        break;
      }
    if (!keep) {
      baseline->active[s] = 0;
      for (int d = 0; d < eng.nD_; ++d) baseline->jumps[d][s] = 0.0;
      ++removed;
    }
  }
  return removed;
}

struct PhaseOut {
  int iterations = 0;
  bool converged = false;
};

// One EM phase. update_* select which parameter blocks move; the trace (when
// given) records the observed-data log-likelihood, one entry per E-step plus
// a final evaluation.
PhaseOut run_phase(Engine& eng, const EmConfig& config, bool use_re, bool update_beta,
                   bool update_sigma, const QuadratureRule& rule, ParameterSet* params,
                   BaselineHazards* baseline, std::vector<double>* trace,
                   std::vector<std::string>* flags, int max_iter_override = -1) {
  int max_iter = max_iter_override > 0 ? max_iter_override : config.max_iter;
  EStepCache cache;
  PhaseOut out;
  Eigen::MatrixXd bnodes;
  Eigen::VectorXd weights;
  for (int iter = 1; iter <= max_iter; ++iter) {
    if (use_re) {
      Eigen::MatrixXd L = cholesky_or_throw(params->sigma());
      bnodes = L * rule.nodes;
      weights = rule.weights;
    } else {
      bnodes = Eigen::MatrixXd::Zero(std::max(eng.d2_, 1), 1);
      weights = Eigen::VectorXd::Ones(1);
    }
    eng.index_active(*baseline);
    e_step_impl(eng, *params, *baseline, bnodes, weights, use_re, config.threads, &cache);
    if (trace) trace->push_back(cache.total_loglik);

    ParameterSet old_params = *params;
    std::vector<std::vector<double>> old_jumps = baseline->jumps;

    m_lambda_impl(eng, cache, *params, baseline);
    if (update_beta) m_beta_impl(eng, cache, params, config.newton_steps_per_m, flags);
    if (update_sigma && use_re) {
      if (m_step_sigma(cache, params) && flags)
        flags->push_back("sigma projected to the positive-definite cone");
    }
    if (config.prune_per_iteration) prune(eng, config.prune_threshold, baseline);

    double delta = 0.0;
    for (int d = 0; d < eng.nD_; ++d) {
      if (update_beta && eng.d1_ > 0)
        delta = std::max(delta, (params->beta[d] - old_params.beta[d]).cwiseAbs().maxCoeff());
      for (int s = 0; s < baseline->grid_size(); ++s)
        if (baseline->active[s])
          delta = std::max(delta, std::abs(std::exp(-baseline->jumps[d][s]) -
                                           std::exp(-old_jumps[d][s])));
    }
    if (update_sigma && use_re && params->gamma.size() > 0)
      delta = std::max(delta, (params->gamma - old_params.gamma).cwiseAbs().maxCoeff());

    out.iterations = iter;
    if (delta < config.tol) {
      out.converged = true;
      break;
    }
  }
  if (!config.prune_per_iteration) prune(eng, config.prune_threshold, baseline);
  return out;
}

QuadratureRule rule_for(const EmConfig& config, int d2) {
  return build_rule(config.resolved_quad_nodes(std::max(d2, 1)), std::max(d2, 1));
}

void check_panels(const TransitionGraph& graph, const std::vector<PanelSubject>& subjects) {
  std::string msg;
  for (const auto& s : subjects)
    for (const auto& v : validate_panel(graph, s)) {
      if (!msg.empty()) msg += "; ";
      msg += "subject " + v.subject_id + " exam " + std::to_string(v.exam_index) + ": " +
             v.message;
    }
  if (!msg.empty()) throw data_error("invalid panel data: " + msg);
}

}  // namespace

double subject_loglik(const TransitionGraph& graph, const PanelSubject& subject,
                      const ParameterSet& params, const BaselineHazards& baseline,
                      const QuadratureRule& rule) {
  std::vector<PanelSubject> one{subject};
  Engine eng(graph, one);
  eng.build_static(baseline);
  eng.index_active(baseline);
  Eigen::MatrixXd L = cholesky_or_throw(params.sigma());
  Eigen::MatrixXd bnodes = L * rule.nodes;
  PassWork work;
  PassResult r = eng.pass_subject(0, params, baseline, bnodes, rule.weights,
                                  /*use_re=*/true, /*compute_terms=*/false, nullptr, work);
  return r.loglik;
}

double e_step_expected_W(const TransitionGraph& graph, const PanelSubject& subject,
                         int interval, int s, const Transition& transition,
                         const Eigen::VectorXd& b, const ParameterSet& params,
                         const BaselineHazards& baseline) {
  if (interval < 1 || interval > subject.n_intervals())
    throw numeric_error("interval index out of range");
  if (s < 0 || s >= baseline.grid_size() || !baseline.active[s])
    throw numeric_error("pruned index " + std::to_string(s));
  double u = baseline.grid[s];
  if (!(u > subject.exam_times[interval - 1] && u <= subject.exam_times[interval]))
    throw numeric_error("grid point outside the examination interval");
  int d = graph.transition_index(transition.from, transition.to);
  if (d < 0) throw numeric_error("infeasible transition " + transition_label(transition));

  std::vector<PanelSubject> one{subject};
  Engine eng(graph, one);
  eng.build_static(baseline);
  eng.index_active(baseline);
  // single "node" located exactly at b
  Eigen::MatrixXd bnodes = b;
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(1);
  EStepCache cache;
  cache.post_weights.resize(1);
  cache.expected_w.resize(1);
  cache.expected_exp_bz.resize(1);
  cache.expected_bb.resize(1);
  cache.logliks.resize(1);
  cache.window_len.resize(1);
  PassWork work;
  PassResult r = eng.pass_subject(0, params, baseline, bnodes, weights, /*use_re=*/true,
                                  /*compute_terms=*/true, &cache, work);
  if (r.zero_likelihood) throw numeric_error("observed pair has zero probability");
  int pos = eng.upper_pos(u) - 1;  // window position of grid point s
  if (pos < 0 || pos >= cache.window_len[0]) return 0.0;
  return cache.expected_w[0](d, pos);
}

EStepCache e_step(const TransitionGraph& graph, const std::vector<PanelSubject>& subjects,
                  const ParameterSet& params, const BaselineHazards& baseline,
                  const QuadratureRule& rule, int threads) {
  Engine eng(graph, subjects);
  eng.build_static(baseline);
  eng.index_active(baseline);
  Eigen::MatrixXd L = cholesky_or_throw(params.sigma());
  Eigen::MatrixXd bnodes = L * rule.nodes;
  EStepCache cache;
  e_step_impl(eng, params, baseline, bnodes, rule.weights, /*use_re=*/true, threads, &cache);
  return cache;
}

void m_step_lambda(const EStepCache& cache, const TransitionGraph& graph,
                   const std::vector<PanelSubject>& subjects, const ParameterSet& params,
                   BaselineHazards* baseline) {
  Engine eng(graph, subjects);
  eng.build_static(*baseline);
  eng.index_active(*baseline);
  m_lambda_impl(eng, cache, params, baseline);
}

void m_step_beta(const EStepCache& cache, const TransitionGraph& graph,
                 const std::vector<PanelSubject>& subjects, const BaselineHazards& baseline,
                 ParameterSet* params, int newton_steps) {
  Engine eng(graph, subjects);
  eng.build_static(baseline);
  eng.index_active(baseline);
  m_beta_impl(eng, cache, params, newton_steps, nullptr);
}

bool m_step_sigma(const EStepCache& cache, ParameterSet* params) {
  if (cache.expected_bb.empty()) return false;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(cache.expected_bb[0].rows(),
                                                cache.expected_bb[0].cols());
  for (const auto& bb : cache.expected_bb) sigma += bb;
  sigma /= static_cast<double>(cache.expected_bb.size());
  bool projected = false;
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-10);
    sigma = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    projected = true;
  }
  params->gamma = ParameterSet::gamma_from_sigma(sigma);
  return projected;
}

std::vector<unsigned char> prescreen_grid(const TransitionGraph& graph,
                                          const std::vector<PanelSubject>& subjects,
                                          const EmConfig& config) {
  BaselineHazards baseline = build_grid(subjects, graph.n_transitions());
  int m = baseline.grid_size();
  baseline.set_uniform_jumps(1.0 / m);
  Engine eng(graph, subjects);
  eng.build_static(baseline);

  int d1 = subjects[0].x_path.dim();
  ParameterSet params = ParameterSet::zero(graph.n_transitions(), d1, 1);
  QuadratureRule rule = build_rule(1, 1);

  EmConfig cfg = config;
  cfg.prune_threshold = 0.0;  // mask only at the end
  EStepCache cache;
  Eigen::MatrixXd bnodes = Eigen::MatrixXd::Zero(1, 1);
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(1);
  for (int iter = 0; iter < config.prescreen_max_iter; ++iter) {
    eng.index_active(baseline);
    e_step_impl(eng, params, baseline, bnodes, weights, /*use_re=*/false, config.threads,
                &cache);
    m_lambda_impl(eng, cache, params, &baseline);
  }
  double cutoff = config.prescreen_c / m;
  std::vector<unsigned char> mask(m, 0);
  for (int s = 0; s < m; ++s) {
    for (int d = 0; d < graph.n_transitions(); ++d)
      if (baseline.jumps[d][s] >= cutoff) {
        mask[s] = 1;
        break;
      }
  }
  return mask;
}

FitResult fit(const TransitionGraph& graph, const std::vector<PanelSubject>& subjects,
              const EmConfig& config) {
  if (subjects.empty()) throw data_error("no observations");
  check_panels(graph, subjects);

  FitResult result;
  result.baseline = build_grid(subjects, graph.n_transitions());
  int m0 = result.baseline.grid_size();
  result.grid_sizes.first = m0;

  int d1 = subjects[0].x_path.dim();
  int d2 = subjects[0].z_path.dim();

  if (config.prescreen) {
    std::vector<unsigned char> mask = prescreen_grid(graph, subjects, config);
    result.baseline.active = mask;
    result.diagnostics.prescreen_removed = m0 - result.baseline.n_active();
    if (result.baseline.n_active() == 0)
      throw numeric_error("prescreening removed every grid point");
  }

  // Initial values: beta = 0, jumps uniform over the working grid, Sigma = I.
  int m_active = result.baseline.n_active();
  for (int d = 0; d < graph.n_transitions(); ++d)
    for (int s = 0; s < m0; ++s)
      result.baseline.jumps[d][s] = result.baseline.active[s] ? 1.0 / m_active : 0.0;
  result.theta = ParameterSet::zero(graph.n_transitions(), d1, d2);

  Engine eng(graph, subjects);
  eng.build_static(result.baseline);
  QuadratureRule rule = rule_for(config, d2);

  if (config.warm_start_no_re) {
    PhaseOut warm = run_phase(eng, config, /*use_re=*/false, /*update_beta=*/true,
                              /*update_sigma=*/false, rule, &result.theta, &result.baseline,
                              nullptr, &result.diagnostics.flags);
    result.diagnostics.warm_start_iterations = warm.iterations;
  }

  PhaseOut main = run_phase(eng, config, /*use_re=*/d2 > 0, /*update_beta=*/true,
                            /*update_sigma=*/true, rule, &result.theta, &result.baseline,
                            &result.loglik_trace, &result.diagnostics.flags);
  result.n_iterations = main.iterations;
  result.converged = main.converged;

  // Final log-likelihood at the converged parameters.
  eng.index_active(result.baseline);
  {
    Eigen::MatrixXd bnodes;
    Eigen::VectorXd weights;
    if (d2 > 0) {
      Eigen::MatrixXd L = cholesky_or_throw(result.theta.sigma());
      bnodes = L * rule.nodes;
      weights = rule.weights;
    } else {
      bnodes = Eigen::MatrixXd::Zero(1, 1);
      weights = Eigen::VectorXd::Ones(1);
    }
    EStepCache cache;
    e_step_impl(eng, result.theta, result.baseline, bnodes, weights, d2 > 0, config.threads,
                &cache);
    result.loglik_trace.push_back(cache.total_loglik);
    result.diagnostics.final_loglik = cache.total_loglik;
  }

  result.grid_sizes.second = result.baseline.n_active();
  if (!result.converged)
    result.diagnostics.flags.push_back("EM did not converge within " +
                                       std::to_string(config.max_iter) + " iterations");
  return result;
}

ProfileFitOut fit_lambda_only(const TransitionGraph& graph,
                              const std::vector<PanelSubject>& subjects,
                              const ParameterSet& theta, const BaselineHazards& init,
                              double tol, int max_iter, const QuadratureRule& rule,
                              int threads) {
  Engine eng(graph, subjects);
  eng.build_static(init);
  ProfileFitOut out;
  out.baseline = init;
  ParameterSet params = theta;
  int d2 = subjects[0].z_path.dim();
  Eigen::MatrixXd bnodes;
  Eigen::VectorXd weights;
  if (d2 > 0) {
    Eigen::MatrixXd L = cholesky_or_throw(params.sigma());
    bnodes = L * rule.nodes;
    weights = rule.weights;
  } else {
    bnodes = Eigen::MatrixXd::Zero(1, 1);
    weights = Eigen::VectorXd::Ones(1);
  }
  EStepCache cache;
  eng.index_active(out.baseline);
  for (int iter = 1; iter <= max_iter; ++iter) {
    e_step_impl(eng, params, out.baseline, bnodes, weights, d2 > 0, threads, &cache);
    std::vector<std::vector<double>> old_jumps = out.baseline.jumps;
    m_lambda_impl(eng, cache, params, &out.baseline);
    double delta = 0.0;
    for (int d = 0; d < eng.nD_; ++d)
      for (int s = 0; s < out.baseline.grid_size(); ++s)
        if (out.baseline.active[s])
          delta = std::max(delta, std::abs(std::exp(-out.baseline.jumps[d][s]) -
                                           std::exp(-old_jumps[d][s])));
    out.iterations = iter;
    if (delta < tol) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged)
    throw numeric_error("profile inner EM did not converge within " +
                        std::to_string(max_iter) + " iterations");
  e_step_impl(eng, params, out.baseline, bnodes, weights, d2 > 0, threads, &cache);
  out.subject_logliks = cache.logliks;
  return out;
}

}  // namespace msmle
