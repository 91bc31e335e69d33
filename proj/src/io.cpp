#include "msmle/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace msmle {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

Transition parse_transition_label(const std::string& s, int n_states) {
  auto pos = s.find("->");
  if (pos == std::string::npos)
    throw data_error("transition '" + s + "' is not of the form j->k");
  int from = 0, to = 0;
  auto r1 = std::from_chars(s.data(), s.data() + pos, from);
  auto r2 = std::from_chars(s.data() + pos + 2, s.data() + s.size(), to);
  if (r1.ec != std::errc() || r2.ec != std::errc())
    throw data_error("transition '" + s + "' is not of the form j->k");
  if (from < 1 || from > n_states || to < 1 || to > n_states)
    throw data_error("transition '" + s + "' references states outside 1.." +
                     std::to_string(n_states));
  return Transition{from - 1, to - 1};
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

double parse_double(const std::string& s, bool* ok) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  bool good = ec == std::errc() && p == s.data() + s.size() && !s.empty();
  if (ok) *ok = good;
  return v;
}

void atomic_write(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(tick);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw data_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw data_error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

ModelConfig read_model_config(const std::string& path) {
  toml::Table root = toml::parse_file(path);
  const toml::Table* model = root.find_table("model");
  if (!model) throw data_error("config is missing the [model] table");

  ModelConfig cfg;
  cfg.state_names = model->get_string_array("states");
  cfg.n_states = static_cast<int>(model->get_int("n_states",
                                                  static_cast<int>(cfg.state_names.size())));
  if (cfg.n_states <= 0)
    throw data_error("config must set n_states or a states list");
  for (const std::string& t : model->get_string_array("transitions"))
    cfg.transitions.push_back(parse_transition_label(t, cfg.n_states));
  if (cfg.transitions.empty()) throw data_error("config lists no transitions");
  cfg.covariate_names = model->get_string_array("covariates");
  cfg.random_effect_columns = model->get_string_array("random_effects");
  for (const auto& c : cfg.random_effect_columns)
    if (std::find(cfg.covariate_names.begin(), cfg.covariate_names.end(), c) ==
        cfg.covariate_names.end())
      throw data_error("random-effect column '" + c + "' is not a covariate column");

  if (const toml::Table* em = root.find_table("em")) {
    cfg.em.tol = em->get_double("tol", cfg.em.tol);
    cfg.em.max_iter = static_cast<int>(em->get_int("max_iter", cfg.em.max_iter));
    cfg.em.prune_threshold = em->get_double("prune_threshold", cfg.em.prune_threshold);
    cfg.em.prune_per_iteration =
        em->get_bool("prune_per_iteration", cfg.em.prune_per_iteration);
    cfg.em.prescreen = em->get_bool("prescreen", cfg.em.prescreen);
    cfg.em.prescreen_max_iter =
        static_cast<int>(em->get_int("prescreen_max_iter", cfg.em.prescreen_max_iter));
    cfg.em.prescreen_c = em->get_double("prescreen_c", cfg.em.prescreen_c);
    cfg.em.warm_start_no_re = em->get_bool("warm_start", cfg.em.warm_start_no_re);
    cfg.em.quad_nodes = static_cast<int>(em->get_int("quad_nodes", cfg.em.quad_nodes));
    cfg.em.newton_steps_per_m =
        static_cast<int>(em->get_int("newton_steps", cfg.em.newton_steps_per_m));
  }
  if (const toml::Table* pr = root.find_table("profile")) {
    cfg.profile.h_multiplier = pr->get_double("h_multiplier", cfg.profile.h_multiplier);
    cfg.profile.inner_tol = pr->get_double("tol", cfg.profile.inner_tol);
    cfg.profile.inner_max_iter =
        static_cast<int>(pr->get_int("max_iter", cfg.profile.inner_max_iter));
    cfg.profile.quad_nodes = static_cast<int>(pr->get_int("quad_nodes", cfg.profile.quad_nodes));
  }
  if (cfg.em.tol <= 0.0) throw data_error("em.tol must be positive");
  if (cfg.em.prune_threshold < 0.0) throw data_error("em.prune_threshold must be >= 0");
  if (cfg.profile.h_multiplier <= 0.0) throw data_error("profile.h_multiplier must be positive");
  return cfg;
}

std::vector<PanelSubject> read_panel_csv(const std::string& path, const ModelConfig& config) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open data file " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "time" || header[2] != "state")
    throw data_error(path + ": header must start with id,time,state");
  std::map<std::string, int> column;
  for (size_t c = 3; c < header.size(); ++c) column[header[c]] = static_cast<int>(c);
  std::vector<int> cov_cols;
  for (const auto& name : config.covariate_names) {
    auto it = column.find(name);
    if (it == column.end())
      throw data_error(path + ": covariate column '" + name + "' not found");
    cov_cols.push_back(it->second);
  }
  std::vector<int> re_cols;
  for (const auto& name : config.random_effect_columns)
    re_cols.push_back(column.at(name));

  struct Row {
    double time;
    int state;
    Eigen::VectorXd x;
    Eigen::VectorXd z;
    int line_no;
  };
  std::map<std::string, std::vector<Row>> by_id;
  std::vector<std::string> id_order;
  std::string problems;
  auto complain = [&](int line_no, const std::string& msg) {
    if (!problems.empty()) problems += "; ";
    problems += "line " + std::to_string(line_no) + ": " + msg;
  };

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      complain(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
      continue;
    }
    Row row;
    row.line_no = line_no;
    bool ok = true;
    row.time = parse_double(fields[1], &ok);
    if (!ok || row.time < 0.0) {
      complain(line_no, "bad time '" + fields[1] + "'");
      continue;
    }
    {
      int state = 0;
      auto r = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), state);
      if (r.ec != std::errc() || state < 1 || state > config.n_states) {
        complain(line_no, "unknown state '" + fields[2] + "'");
        continue;
      }
      row.state = state - 1;
    }
    row.x.resize(cov_cols.size());
    for (size_t c = 0; c < cov_cols.size(); ++c) {
      bool okc = true;
      row.x[c] = parse_double(fields[cov_cols[c]], &okc);
      if (!okc) {
        complain(line_no, "bad value in column " + config.covariate_names[c]);
        ok = false;
      }
    }
    if (!ok) continue;
    row.z.resize(1 + re_cols.size());
    row.z[0] = 1.0;
    for (size_t c = 0; c < re_cols.size(); ++c) row.z[1 + c] = parse_double(fields[re_cols[c]], nullptr);
    auto it = by_id.find(fields[0]);
    if (it == by_id.end()) {
      id_order.push_back(fields[0]);
      by_id[fields[0]] = {row};
    } else {
      it->second.push_back(row);
    }
  }

  std::vector<PanelSubject> subjects;
  for (const std::string& id : id_order) {
    auto& rows = by_id[id];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    for (size_t r = 1; r < rows.size(); ++r)
      if (rows[r].time == rows[r - 1].time)
        complain(rows[r].line_no, "duplicate time for subject " + id);
    if (rows.front().time != 0.0)
      complain(rows.front().line_no, "subject " + id + " has no baseline (time 0) row");
    PanelSubject s;
    s.id = id;
    std::vector<double> bp_times;
    Eigen::MatrixXd xs(rows.front().x.size(), rows.size());
    Eigen::MatrixXd zs(rows.front().z.size(), rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      s.exam_times.push_back(rows[r].time);
      s.states.push_back(rows[r].state);
      bp_times.push_back(rows[r].time);
      xs.col(r) = rows[r].x;
      zs.col(r) = rows[r].z;
    }
    if (problems.empty()) {
      s.x_path = CovariatePath(bp_times, xs);
      s.z_path = CovariatePath(bp_times, zs);
      subjects.push_back(std::move(s));
    }
  }
  if (!problems.empty()) throw data_error(path + ": " + problems);
  if (subjects.empty()) throw data_error(path + ": no subjects");
  return subjects;
}

void write_panel_csv(const std::string& path, const std::vector<PanelSubject>& subjects,
                     const std::vector<std::string>& covariate_names) {
  std::ostringstream os;
  os << "id,time,state";
  for (const auto& c : covariate_names) os << ',' << c;
  os << '\n';
  for (const auto& s : subjects) {
    for (size_t l = 0; l < s.exam_times.size(); ++l) {
      os << s.id << ',' << format_double(s.exam_times[l]) << ',' << s.states[l] + 1;
      Eigen::VectorXd x = s.x_path.at(s.exam_times[l]);
      for (int c = 0; c < x.size(); ++c) os << ',' << format_double(x[c]);
      os << '\n';
    }
  }
  atomic_write(path, os.str());
}

void write_truth_csv(const std::string& path, const std::vector<SimulatedSubject>& subjects) {
  std::ostringstream os;
  os << "id,time,state\n";
  for (const auto& s : subjects)
    for (size_t k = 0; k < s.truth.times.size(); ++k)
      os << s.panel.id << ',' << format_double(s.truth.times[k]) << ','
         << s.truth.states[k] + 1 << '\n';
  atomic_write(path, os.str());
}

namespace {

json theta_to_json(const ParameterSet& p) {
  json j;
  j["beta"] = json::array();
  for (const auto& b : p.beta)
    j["beta"].push_back(std::vector<double>(b.data(), b.data() + b.size()));
  j["gamma"] = std::vector<double>(p.gamma.data(), p.gamma.data() + p.gamma.size());
  return j;
}

ParameterSet theta_from_json(const json& j) {
  ParameterSet p;
  for (const auto& b : j.at("beta")) {
    std::vector<double> v = b.get<std::vector<double>>();
    p.beta.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), v.size()));
  }
  std::vector<double> g = j.at("gamma").get<std::vector<double>>();
  p.gamma = Eigen::Map<Eigen::VectorXd>(g.data(), g.size());
  return p;
}

}  // namespace

void write_fit_json(const FitArtifact& artifact, const std::string& path) {
  const FitResult& fit = artifact.fit;
  json j;
  j["format"] = "msmle-fit/1";
  j["model"]["n_states"] = artifact.n_states;
  j["model"]["transitions"] = json::array();
  for (const auto& t : artifact.transitions)
    j["model"]["transitions"].push_back({t.from + 1, t.to + 1});
  j["model"]["covariates"] = artifact.covariate_names;
  j["model"]["random_effects"] = artifact.random_effect_columns;
  j["theta"] = theta_to_json(fit.theta);
  j["baseline"]["grid"] = fit.baseline.grid;
  j["baseline"]["jumps"] = fit.baseline.jumps;
  j["baseline"]["active"] = std::vector<int>(fit.baseline.active.begin(),
                                             fit.baseline.active.end());
  if (fit.covariance) {
    std::vector<double> tri;
    int p = static_cast<int>(fit.covariance->rows());
    for (int r = 0; r < p; ++r)
      for (int c = 0; c <= r; ++c) tri.push_back((*fit.covariance)(r, c));
    j["covariance"]["dim"] = p;
    j["covariance"]["lower_triangle"] = tri;
  }
  j["parameter_names"] = fit.parameter_names;
  j["loglik_trace"] = fit.loglik_trace;
  j["n_iterations"] = fit.n_iterations;
  j["converged"] = fit.converged;
  j["grid_sizes"] = {fit.grid_sizes.first, fit.grid_sizes.second};
  j["diagnostics"]["flags"] = fit.diagnostics.flags;
  j["diagnostics"]["prescreen_removed"] = fit.diagnostics.prescreen_removed;
  j["diagnostics"]["warm_start_iterations"] = fit.diagnostics.warm_start_iterations;
  j["diagnostics"]["final_loglik"] = fit.diagnostics.final_loglik;
  atomic_write(path, j.dump(2) + "\n");
}

FitArtifact read_fit_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open fit file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error(path + ": " + e.what());
  }
  if (j.value("format", "") != std::string("msmle-fit/1"))
    throw data_error(path + ": unsupported fit format version '" +
                     j.value("format", "(missing)") + "'");
  FitArtifact a;
  a.n_states = j.at("model").at("n_states").get<int>();
  for (const auto& t : j.at("model").at("transitions"))
    a.transitions.push_back(Transition{t.at(0).get<int>() - 1, t.at(1).get<int>() - 1});
  a.covariate_names = j.at("model").at("covariates").get<std::vector<std::string>>();
  a.random_effect_columns =
      j.at("model").at("random_effects").get<std::vector<std::string>>();
  a.fit.theta = theta_from_json(j.at("theta"));
  a.fit.baseline.grid = j.at("baseline").at("grid").get<std::vector<double>>();
  a.fit.baseline.jumps =
      j.at("baseline").at("jumps").get<std::vector<std::vector<double>>>();
  std::vector<int> act = j.at("baseline").at("active").get<std::vector<int>>();
  a.fit.baseline.active.assign(act.begin(), act.end());
  if (j.contains("covariance")) {
    int p = j.at("covariance").at("dim").get<int>();
    std::vector<double> tri =
        j.at("covariance").at("lower_triangle").get<std::vector<double>>();
    Eigen::MatrixXd cov(p, p);
    size_t k = 0;
    for (int r = 0; r < p; ++r)
      for (int c = 0; c <= r; ++c) {
        cov(r, c) = tri[k];
        cov(c, r) = tri[k];
        ++k;
      }
    a.fit.covariance = cov;
  }
  a.fit.parameter_names = j.at("parameter_names").get<std::vector<std::string>>();
  a.fit.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
  a.fit.n_iterations = j.at("n_iterations").get<int>();
  a.fit.converged = j.at("converged").get<bool>();
  a.fit.grid_sizes = {j.at("grid_sizes").at(0).get<int>(), j.at("grid_sizes").at(1).get<int>()};
  a.fit.diagnostics.flags =
      j.at("diagnostics").at("flags").get<std::vector<std::string>>();
  a.fit.diagnostics.prescreen_removed = j.at("diagnostics").at("prescreen_removed").get<int>();
  a.fit.diagnostics.warm_start_iterations =
      j.at("diagnostics").at("warm_start_iterations").get<int>();
  a.fit.diagnostics.final_loglik = j.at("diagnostics").at("final_loglik").get<double>();
  return a;
}

CovariateProfile read_profile_toml(const std::string& path, const FitArtifact& artifact) {
  toml::Table root = toml::parse_file(path);
  const toml::Table* cov = root.find_table("covariates");
  if (!cov) throw data_error(path + ": missing [covariates] table");
  Eigen::VectorXd x(artifact.covariate_names.size());
  for (size_t c = 0; c < artifact.covariate_names.size(); ++c) {
    const toml::Value* v = cov->find(artifact.covariate_names[c]);
    if (!v) throw data_error(path + ": profile is missing covariate '" +
                             artifact.covariate_names[c] + "'");
    x[c] = v->as_double();
  }
  Eigen::VectorXd z(1 + artifact.random_effect_columns.size());
  z[0] = 1.0;
  for (size_t c = 0; c < artifact.random_effect_columns.size(); ++c)
    z[1 + c] = cov->find(artifact.random_effect_columns[c])->as_double();

  CovariateProfile out;
  out.x = CovariatePath::constant(x);
  out.z = CovariatePath::constant(z);
  if (const toml::Table* opt = root.find_table("options")) {
    std::string mode = opt->get_string("re_mode", "");
    if (!mode.empty()) {
      if (mode == "zero")
        out.re_mode = RandomEffectMode::Zero;
      else if (mode == "average")
        out.re_mode = RandomEffectMode::Average;
      else
        throw data_error(path + ": re_mode must be 'zero' or 'average'");
      out.re_mode_set = true;
    }
  }
  return out;
}

Scenario read_scenario_toml(const std::string& path) {
  toml::Table root = toml::parse_file(path);
  Scenario s;
  s.name = root.get_string("name", "custom");
  s.n_states = static_cast<int>(root.get_int("n_states", 0));
  if (s.n_states <= 0) throw data_error(path + ": n_states must be positive");
  s.initial_probs = root.get_double_array("initial_probs");
  if (static_cast<int>(s.initial_probs.size()) != s.n_states)
    throw data_error(path + ": initial_probs must list one probability per state");
  double psum = 0.0;
  for (double p : s.initial_probs) psum += p;
  if (std::abs(psum - 1.0) > 1e-9)
    throw data_error(path + ": initial_probs must sum to 1");
  s.sigma2_true = root.get_double("sigma2", 0.0);
  s.study_end = root.get_double("study_end", 3.0);
  s.n_potential_exams = static_cast<int>(root.get_int("n_exams", 6));
  s.first_exam_max = root.get_double("first_exam_max", 1.0);
  s.gap_offset = root.get_double("gap_offset", 0.05);
  s.gap_max = root.get_double("gap_max", 1.0);

  auto cov_it = root.table_arrays.find("covariate");
  if (cov_it != root.table_arrays.end()) {
    for (const toml::Table& t : cov_it->second) {
      CovariateSpec c;
      c.name = t.get_string("name", "x" + std::to_string(s.covariates.size() + 1));
      std::string law = t.get_string("law", "uniform");
      if (law == "bernoulli") {
        c.law = CovariateLaw::Bernoulli;
        c.a = t.get_double("p", 0.5);
      } else if (law == "uniform") {
        c.law = CovariateLaw::Uniform;
        c.a = t.get_double("min", 0.0);
        c.b = t.get_double("max", 1.0);
      } else if (law == "constant") {
        c.law = CovariateLaw::Constant;
        c.a = t.get_double("value", 0.0);
      } else {
        throw data_error(path + ": unknown covariate law '" + law + "'");
      }
      s.covariates.push_back(c);
    }
  }

  auto tr_it = root.table_arrays.find("transition");
  if (tr_it == root.table_arrays.end() || tr_it->second.empty())
    throw data_error(path + ": at least one [[transition]] table is required");
  for (const toml::Table& t : tr_it->second) {
    int from = static_cast<int>(t.get_int("from", 0));
    int to = static_cast<int>(t.get_int("to", 0));
    if (from < 1 || from > s.n_states || to < 1 || to > s.n_states)
      throw data_error(path + ": transition states outside 1.." + std::to_string(s.n_states));
    s.transitions.push_back(Transition{from - 1, to - 1});
    BaselineSpec base;
    std::string form = t.get_string("form", "linear");
    if (form == "log1p")
      base.form = BaselineForm::Log1p;
    else if (form == "linear")
      base.form = BaselineForm::Linear;
    else
      throw data_error(path + ": unknown baseline form '" + form + "'");
    base.rate = t.get_double("rate", 0.0);
    if (base.rate < 0.0) throw data_error(path + ": baseline rate must be >= 0");
    s.baselines.push_back(base);
    std::vector<double> beta = t.get_double_array("beta");
    if (beta.size() != s.covariates.size())
      throw data_error(path + ": beta must list one coefficient per covariate");
    s.beta_true.push_back(Eigen::Map<Eigen::VectorXd>(beta.data(), beta.size()));
  }
  s.graph();  // validates acyclicity
  return s;
}

Scenario resolve_scenario(const std::string& spec) {
  if (spec == "three-state") return three_state_scenario();
  if (spec == "four-state") return four_state_scenario();
  if (spec.rfind("file:", 0) == 0) return read_scenario_toml(spec.substr(5));
  throw usage_error("unknown scenario '" + spec +
                    "' (expected three-state, four-state or file:<path>)");
}

void write_curves_csv(const std::string& path,
                      const std::vector<std::pair<Transition, std::vector<CurvePoint>>>& curves) {
  std::ostringstream os;
  os << "transition,time,value\n";
  for (const auto& [tr, pts] : curves)
    for (const auto& p : pts)
      os << transition_label(tr) << ',' << format_double(p.time) << ','
         << format_double(p.value) << '\n';
  atomic_write(path, os.str());
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, double t1,
                      double t2) {
  std::ostringstream os;
  os << "t1,t2,from,to,probability\n";
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      os << format_double(t1) << ',' << format_double(t2) << ',' << r + 1 << ',' << c + 1
         << ',' << format_double(m(r, c)) << '\n';
  atomic_write(path, os.str());
}

void write_bench_csv(const std::string& path, const BenchReport& report) {
  atomic_write(path, report_to_table(report, ReportFormat::Csv));
}

}  // namespace msmle
