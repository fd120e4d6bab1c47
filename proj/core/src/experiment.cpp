#include "striprw/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "striprw/algebra.hpp"
#include "striprw/error.hpp"
#include "striprw/occupation.hpp"
#include "striprw/parallel.hpp"
#include "striprw/traps.hpp"
#include "striprw/walker.hpp"

#ifndef STRIPRW_VERSION
#define STRIPRW_VERSION "0.0.0"
#endif

namespace striprw {

using nlohmann::json;
namespace fs = std::filesystem;

const char* code_version() { return STRIPRW_VERSION; }

// ---------------------------------------------------------------- config

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  auto bad = [&] { return ConfigError("bad grid '" + text + "'"); };
  if (text.find(':') != std::string::npos) {
    double a, b, h;
    char c1, c2;
    std::istringstream is(text);
    if (!(is >> a >> c1 >> b >> c2 >> h) || c1 != ':' || c2 != ':' ||
        !(h > 0.0) || b < a) {
      throw bad();
    }
    const long count = static_cast<long>(std::floor((b - a) / h + 1e-9));
    for (long k = 0; k <= count; ++k) out.push_back(a + k * h);
    return out;
  }
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw bad();
    }
  }
  if (out.empty()) throw bad();
  return out;
}

std::vector<std::string> config_violations(const ExperimentConfig& cfg) {
  std::vector<std::string> v;
  if (cfg.N < 10) v.push_back("N must be >= 10");
  if (cfg.replicas < 1) v.push_back("replicas must be >= 1");
  if (cfg.environments < 1) v.push_back("environments must be >= 1");
  if (!(cfg.delta > 0.0)) v.push_back("delta must be > 0");
  if (!(cfg.tail_tol > 0.0 && cfg.tail_tol < 1.0)) {
    v.push_back("tail_tol must lie in (0, 1)");
  }
  if (!(cfg.tail_eps > 0.0 && cfg.tail_eps < 1.0)) {
    v.push_back("tail_eps must lie in (0, 1)");
  }
  if (cfg.s && !(*cfg.s > 0.0)) v.push_back("s must be > 0");
  if (cfg.workers < 1) v.push_back("workers must be >= 1");
  if (cfg.lyapunov_n < 1 || cfg.lyapunov_replicas < 1) {
    v.push_back("lyapunov n and replicas must be >= 1");
  }
  if (cfg.moment_n < 1 || cfg.moment_replicas < 1) {
    v.push_back("moment n and replicas must be >= 1");
  }
  for (double a : cfg.alpha_grid) {
    if (!(a >= 0.0)) {
      v.push_back("alpha grid entries must be >= 0");
      break;
    }
  }
  try {
    cfg.law.validate();
  } catch (const ConfigError& e) {
    v.push_back(std::string("law: ") + e.what());
  }
  return v;
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::uint64_t read_seed(const json& j) {
  if (j.is_string()) return std::stoull(j.get<std::string>(), nullptr, 0);
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) {
    return static_cast<std::uint64_t>(j.get<long long>());
  }
  throw ConfigError("seed must be a nonnegative integer");
}

json config_json(const ExperimentConfig& cfg, bool with_runtime) {
  json j;
  j["law"] = json::parse(cfg.law_json.empty() ? law_to_json_text(cfg.law)
                                              : cfg.law_json);
  j["N"] = cfg.N;
  j["delta"] = cfg.delta;
  j["replicas"] = cfg.replicas;
  j["environments"] = cfg.environments;
  j["seed"] = cfg.seed;
  j["tail_tol"] = cfg.tail_tol;
  j["tail_eps"] = cfg.tail_eps;
  j["alpha_grid"] = cfg.alpha_grid;
  if (cfg.s) j["s"] = *cfg.s;
  j["lyapunov"] = {{"n", cfg.lyapunov_n}, {"replicas", cfg.lyapunov_replicas}};
  j["moments"] = {{"n", cfg.moment_n}, {"replicas", cfg.moment_replicas}};
  j["memory_cap_mb"] = cfg.memory_cap_mb;
  if (with_runtime) {
    j["output_dir"] = cfg.output_dir;
    j["workers"] = cfg.workers;
  }
  return j;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  ExperimentConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  std::vector<std::string> problems;
  try {
    if (!j.contains("law")) throw ConfigError("missing 'law'");
    cfg.law_json = j.at("law").dump();
    cfg.law = law_from_json_text(cfg.law_json);
    cfg.law_json = law_to_json_text(cfg.law);
    read_opt(j, "N", cfg.N);
    read_opt(j, "delta", cfg.delta);
    read_opt(j, "replicas", cfg.replicas);
    read_opt(j, "environments", cfg.environments);
    if (j.contains("seed")) cfg.seed = read_seed(j.at("seed"));
    read_opt(j, "tail_tol", cfg.tail_tol);
    read_opt(j, "tail_eps", cfg.tail_eps);
    if (j.contains("alpha_grid")) {
      const auto& g = j.at("alpha_grid");
      cfg.alpha_grid = g.is_string() ? parse_grid(g.get<std::string>())
                                     : g.get<std::vector<double>>();
    }
    if (j.contains("s") && !j.at("s").is_null()) cfg.s = j.at("s").get<double>();
    if (j.contains("lyapunov")) {
      read_opt(j.at("lyapunov"), "n", cfg.lyapunov_n);
      read_opt(j.at("lyapunov"), "replicas", cfg.lyapunov_replicas);
    }
    if (j.contains("moments")) {
      read_opt(j.at("moments"), "n", cfg.moment_n);
      read_opt(j.at("moments"), "replicas", cfg.moment_replicas);
    }
    read_opt(j, "memory_cap_mb", cfg.memory_cap_mb);
    read_opt(j, "output_dir", cfg.output_dir);
    read_opt(j, "workers", cfg.workers);
  } catch (const json::exception& e) {
    problems.push_back(std::string("bad field type: ") + e.what());
  } catch (const ConfigError& e) {
    problems.push_back(e.what());
  }
  if (problems.empty()) problems = config_violations(cfg);
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  return config_json(cfg, true).dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = config_json(cfg, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ------------------------------------------------------------------- csv

std::string csv_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void CsvWriter::sep() {
  if (!first_) out_ << ',';
  first_ = false;
}

void CsvWriter::header(const std::vector<std::string>& names) {
  for (const auto& n : names) *this << n;
  end_row();
}

CsvWriter& CsvWriter::operator<<(double x) {
  sep();
  out_ << csv_number(x);
  return *this;
}

CsvWriter& CsvWriter::operator<<(long long x) {
  sep();
  out_ << x;
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::uint64_t x) {
  sep();
  out_ << x;
  return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& s) {
  sep();
  out_ << csv_field(s);
  return *this;
}

void CsvWriter::end_row() {
  out_ << "\r\n";
  first_ = true;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<std::vector<double>> read_csv(const std::string& path,
                                          std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw InsufficientData(path + " is empty");
  const auto names = split_csv_line(line);
  if (header) *header = names;
  std::vector<std::vector<double>> rows;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != names.size()) {
      throw StructuralError(path + ":" + std::to_string(lineno) +
                            ": wrong number of fields");
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw StructuralError(path + ":" + std::to_string(lineno) +
                              ": not a number: " + c);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> read_csv_column(const std::string& path,
                                    const std::string& column) {
  std::vector<std::string> header;
  const auto rows = read_csv(path, &header);
  std::size_t col = header.size();
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == column) col = k;
  }
  if (col == header.size()) {
    throw ConfigError(path + " has no column '" + column + "'");
  }
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[col]);
  return out;
}

// ------------------------------------------------------------ environment

std::uint64_t environment_seed(std::uint64_t seed, long e) {
  return derive_key(seed, StreamDomain::kEnvironment,
                    static_cast<std::uint64_t>(e));
}

Margins initial_margins(double lambda, long burn_in, double tol) {
  if (!(lambda < 0.0)) {
    throw OutOfRegime("the walk is not transient to the right (lambda >= 0)");
  }
  const double decay = -lambda;
  Margins m;
  m.left = burn_in + static_cast<long>(std::ceil(2.0 * 27.7 / decay)) + 50;
  m.right = 4 * burn_in +
            static_cast<long>(std::ceil(2.0 * std::abs(std::log(tol)) / decay)) +
            50;
  return m;
}

PreparedEnvironment prepare_environment(const EnvironmentLaw& law, long N,
                                        std::uint64_t env_seed,
                                        long chain_first, Margins margins,
                                        double tol) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    PreparedEnvironment out;
    out.env_seed = env_seed;
    out.left_margin = margins.left;
    out.right_slack = margins.right;
    out.env = sample_iid_environment(law, chain_first - margins.left,
                                     N + margins.right, env_seed);
    try {
      out.chain = build_chain(out.env, chain_first, tol);
      return out;
    } catch (const NeedsWiderWindow& e) {
      if (e.left()) {
        margins.left = 2 * margins.left + e.extra_layers();
      } else {
        margins.right = 2 * margins.right + e.extra_layers();
      }
    }
  }
  throw NumericError("could not certify the chain after widening 16 times");
}

// --------------------------------------------------------------- manifest

std::string RunManifest::to_json(bool with_timings) const {
  json j;
  j["config_hash"] = config_hash;
  j["version"] = version;
  if (with_timings) {
    json t = json::object();
    for (const auto& st : timings) t[st.stage] = st.seconds;
    j["timings"] = t;
  }
  j["s_hat"] = s_hat;
  j["s_from_config"] = s_from_config;
  j["lambda_hat"] = lambda_hat;
  j["trap_counts"] = trap_counts;
  json tj = json::object();
  for (const auto& [name, rep] : tests) tj[name] = json::parse(rep.to_json());
  j["tests"] = tj;
  j["notes"] = notes;
  j["artifacts"] = artifacts;
  j["ok"] = ok;
  if (!error.empty()) j["error"] = error;
  return j.dump(2);
}

std::string Plan::to_json() const {
  json j;
  j["stages"] = stages;
  j["window"] = {{"first", window_first}, {"last", window_last}};
  j["burn_in"] = burn_in;
  j["right_slack"] = right_slack;
  j["cutoff_l"] = cutoff_l;
  j["cutoff_certificate"] = cutoff_certificate;
  j["memory_mb"] = memory_mb;
  j["streaming"] = streaming;
  return j.dump(2);
}

double bytes_per_layer(int m) {
  // Window: 3 m^2 entries and an atom index. Chain: zeta, A, Minv, bold u,
  // pi, v, lambda, ln lambda. Profile: rho, w, tail, remainder, rho_y.
  const double doubles = 6.0 * m * m + 3.0 * m + 2.0 + 4.0 + m;
  return 8.0 * doubles + 4.0;
}

namespace {

const std::vector<std::string> kStages = {"lyapunov", "moments",
                                          "environments", "limits", "tests"};

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

class ArtifactSet {
 public:
  explicit ArtifactSet(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  std::ofstream open(const std::string& name) {
    for (const auto& stale : {dir_ / name, dir_ / (name + ".partial")}) {
      std::error_code ec;
      fs::remove(stale, ec);
    }
    names_.push_back(name);
    std::ofstream out(dir_ / (name + ".partial"), std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir_ / name).string());
    return out;
  }

  void commit() {
    for (const auto& n : names_) {
      fs::rename(dir_ / (n + ".partial"), dir_ / n);
    }
  }

  const std::vector<std::string>& names() const { return names_; }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

}  // namespace

EnvironmentResult analyze_window(const EnvironmentWindow& env,
                                 std::uint64_t env_seed,
                                 const AnalysisOptions& opts) {
  const double tol = std::min(opts.tail_tol, opts.tail_eps);
  const ChainState chain = build_chain(env, 0, tol);
  EnvironmentResult r;
  r.env_seed = env_seed;
  OccupationOptions oopts;
  oopts.tail_tol = opts.tail_tol;
  // M extra layers so a massive site just past N-1 can suppress a mark.
  r.profile = rho_profile(chain, 0, opts.N - 1 + trap_depth(opts.N), oopts);
  r.cutoff =
      certify_cutoff(chain, opts.N, opts.tail_eps, r.profile.edge_factor);
  if (r.cutoff.layer > env.last()) {
    throw NeedsWiderWindow("cutoff past the window",
                           r.cutoff.layer - env.last(), false);
  }
  r.traps = detect_traps(r.profile.w, r.profile.rho, opts.N, opts.delta,
                         opts.s);
  for (const auto& t : r.traps) r.rungs.push_back(trap_rung(t, r.profile));
  for (long n = 0; n < opts.N; ++n) r.expected_T += r.profile.rho_at(n);

  const auto key = derive_key(env_seed, StreamDomain::kReplica, 0);
  std::optional<Walker> walker;
  if (env.m() > 1) walker.emplace(env);
  r.walks = parallel_map<WalkRecord>(
      static_cast<std::size_t>(opts.replicas), opts.workers,
      [&](std::size_t i) {
        Rng rng(key, i);
        WalkRecord w;
        if (env.m() == 1) {
          const CrossingRun cr = sample_crossings(
              env, opts.start.n, opts.N, r.cutoff.layer, rng, true);
          w.hit_time = cr.hit_time;
          w.occupation_time = cr.occupation_time;
          for (const auto& t : r.traps) {
            w.trap_visits.push_back(cr.visits_at(t.marked_n));
          }
        } else {
          const TrajectorySummary tr =
              walker->run_until(opts.start, opts.N, r.cutoff.layer, rng);
          if (tr.timed_out) throw NumericError("walk exceeded max steps");
          w.hit_time = tr.hit_time;
          w.occupation_time = tr.occupation_time;
          for (std::size_t j = 0; j < r.traps.size(); ++j) {
            w.trap_visits.push_back(
                tr.xi_at({r.traps[j].marked_n, r.rungs[j]}));
          }
        }
        return w;
      });
  return r;
}

EnvironmentResult analyze_environment(const EnvironmentLaw& law,
                                      std::uint64_t seed, long e,
                                      Margins margins,
                                      const AnalysisOptions& opts) {
  const std::uint64_t env_seed = environment_seed(seed, e);
  for (int attempt = 0; attempt < 16; ++attempt) {
    try {
      const EnvironmentWindow env = sample_iid_environment(
          law, -margins.left, opts.N + margins.right, env_seed);
      return analyze_window(env, env_seed, opts);
    } catch (const NeedsWiderWindow& ex) {
      if (ex.left()) {
        margins.left = 2 * margins.left + ex.extra_layers();
      } else {
        margins.right = 2 * margins.right + ex.extra_layers();
      }
    }
  }
  throw NumericError("environment window could not be widened enough");
}

void write_profile_csv(std::ostream& out, const OccupationProfile& p) {
  CsvWriter csv(out);
  std::vector<std::string> cols = {"n", "rho", "w"};
  for (int y = 1; y <= p.m; ++y) cols.push_back("rho_y" + std::to_string(y));
  cols.push_back("tail_bound");
  csv.header(cols);
  for (long n = p.first; n <= p.last; ++n) {
    csv << n << p.rho_at(n) << p.w_at(n);
    for (int y = 1; y <= p.m; ++y) csv << p.rho_y_at(n, y);
    csv << p.tail_bound[n - p.first];
    csv.end_row();
  }
}

void write_traps_csv(std::ostream& out, const std::vector<TrapRecord>& traps,
                     long N, double s, const std::uint64_t* env_seed) {
  CsvWriter csv(out);
  std::vector<std::string> cols = {"marked_n", "left", "mass", "center",
                                   "theta"};
  if (env_seed) cols.push_back("env_seed");
  csv.header(cols);
  const double scale = std::pow(static_cast<double>(N), 1.0 / s);
  for (const auto& t : traps) {
    csv << t.marked_n << t.left << t.mass << t.center << t.mass / scale;
    if (env_seed) csv << *env_seed;
    csv.end_row();
  }
}

void write_points_csv(std::ostream& out,
                      const std::vector<EnvironmentResult>& envs, long N,
                      double s, std::vector<double>* gammas,
                      std::vector<double>* locations) {
  CsvWriter csv(out);
  csv.header({"loc", "theta", "gamma", "flag", "env_seed", "replica"});
  for (const auto& r : envs) {
    const PointSample ps = point_process(r.traps, N, s);
    if (locations) {
      for (std::size_t j = 0; j < r.traps.size(); ++j) {
        if (!r.traps[j].clipped) locations->push_back(ps.location[j]);
      }
    }
    for (std::size_t i = 0; i < r.walks.size(); ++i) {
      for (std::size_t j = 0; j < r.traps.size(); ++j) {
        const long long xi = r.walks[i].trap_visits[j];
        const double rho = r.profile.rho_y_at(r.traps[j].marked_n, r.rungs[j]);
        const double g = static_cast<double>(xi) / rho;
        // bit 0: trap never visited at k_j; bit 1: window clipped at 0.
        const int flag = (xi == 0 ? 1 : 0) | (r.traps[j].clipped ? 2 : 0);
        if (flag == 0 && gammas) gammas->push_back(g);
        csv << ps.location[j] << ps.theta[j] << g << flag << r.env_seed
            << static_cast<long long>(i);
        csv.end_row();
      }
    }
  }
}

void write_tn_csv(std::ostream& out, const std::vector<EnvironmentResult>& envs,
                  long N, double s) {
  CsvWriter csv(out);
  csv.header({"env_seed", "tN", "uN"});
  std::vector<std::vector<double>> T;
  std::vector<double> ET, pool;
  for (const auto& r : envs) {
    std::vector<double> t;
    for (const auto& w : r.walks) {
      t.push_back(static_cast<double>(w.occupation_time));
    }
    T.push_back(std::move(t));
    ET.push_back(r.expected_T);
    pool.insert(pool.end(), r.profile.rho.begin(),
                r.profile.rho.begin() + N);
  }
  const Normalized nz = normalize_tN_uN(T, ET, N, s, pool);
  for (std::size_t e = 0; e < envs.size(); ++e) {
    for (double t : nz.tN[e]) {
      csv << envs[e].env_seed << t << nz.uN[e];
      csv.end_row();
    }
  }
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
  RunManifest man;
  man.config_hash = config_hash(cfg);
  man.version = code_version();
  ArtifactSet files(cfg.output_dir);
  auto finish = [&](bool ok) {
    man.ok = ok;
    man.artifacts = files.names();
    man.artifacts.push_back("manifest.json");
    auto out = files.open("manifest.json");
    out << man.to_json(true) << "\n";
    out.close();
    if (ok) files.commit();
  };
  try {
    const auto violations = config_violations(cfg);
    if (!violations.empty()) {
      std::string msg = "invalid config:";
      for (const auto& v : violations) msg += "\n  - " + v;
      throw ConfigError(msg);
    }
    const std::uint64_t lyap_seed =
        derive_key(cfg.seed, StreamDomain::kAuxiliary, 1);
    const std::uint64_t moment_seed =
        derive_key(cfg.seed, StreamDomain::kAuxiliary, 2);

    // Lyapunov exponent and s.
    Stopwatch sw;
    const LyapunovEstimate ly = lyapunov_exponent(
        cfg.law, cfg.lyapunov_n, cfg.lyapunov_replicas, lyap_seed, cfg.workers);
    man.lambda_hat = ly.value;
    man.timings.push_back({"lyapunov", sw.seconds()});

    Stopwatch sw2;
    MomentOptions mopts;
    mopts.workers = cfg.workers;
    mopts.burn_in = law_burn_in(cfg.law, 1e-12, moment_seed);
    SolveResult sr;
    if (cfg.s) {
      man.s_hat = *cfg.s;
      man.s_from_config = true;
      sr.s_hat = *cfg.s;
      sr.ci_lo = sr.ci_hi = *cfg.s;
    } else {
      sr = solve_s(cfg.law, 1e-3, cfg.moment_n, cfg.moment_replicas,
                   moment_seed, 10.0, mopts);
      man.s_hat = sr.s_hat;
    }
    {
      auto out = files.open("lyap.json");
      json j;
      j["lambda_hat"] = ly.value;
      j["stderr"] = ly.std_error;
      j["n"] = ly.n;
      j["replicas"] = ly.replicas;
      j["burn_in"] = ly.burn_in;
      j["s_hat"] = sr.s_hat;
      j["ci_lo"] = sr.ci_lo;
      j["ci_hi"] = sr.ci_hi;
      j["diffusive"] = sr.diffusive;
      j["s_source"] = cfg.s ? "config" : "solve_s";
      out << j.dump(2) << "\n";
    }
    {
      auto out = files.open("rcurve.csv");
      CsvWriter csv(out);
      csv.header({"alpha", "r_hat", "stderr"});
      for (double a : cfg.alpha_grid) {
        const MomentEstimate me = moment_lyapunov(
            cfg.law, a, cfg.moment_n, cfg.moment_replicas, moment_seed, mopts);
        csv << a << me.r_hat << me.std_error;
        csv.end_row();
        if (!me.warning.empty()) {
          man.notes.push_back("alpha " + csv_number(a) + ": " + me.warning);
        }
      }
    }
    man.timings.push_back({"moments", sw2.seconds()});

    // Environments: chain, profile, traps and walks.
    Stopwatch sw3;
    const long burn = mopts.burn_in;
    const Margins margins = initial_margins(
        ly.value, burn, std::min(cfg.tail_tol, cfg.tail_eps));
    const double s = man.s_hat;
    AnalysisOptions aopts;
    aopts.N = cfg.N;
    aopts.delta = cfg.delta;
    aopts.s = s;
    aopts.replicas = cfg.replicas;
    aopts.tail_tol = cfg.tail_tol;
    aopts.tail_eps = cfg.tail_eps;
    aopts.workers = cfg.workers;
    std::vector<EnvironmentResult> envs;
    envs.reserve(cfg.environments);
    for (long e = 0; e < cfg.environments; ++e) {
      envs.push_back(analyze_environment(cfg.law, cfg.seed, e, margins, aopts));
    }
    {
      auto out = files.open("profile.csv");
      write_profile_csv(out, envs.front().profile);
    }
    {
      auto out = files.open("runs.csv");
      CsvWriter csv(out);
      csv.header({"replica", "hit_time", "occupation_time", "cutoff_l",
                  "env_seed"});
      for (const auto& r : envs) {
        for (std::size_t i = 0; i < r.walks.size(); ++i) {
          csv << static_cast<long long>(i) << r.walks[i].hit_time
              << r.walks[i].occupation_time << r.cutoff.l << r.env_seed;
          csv.end_row();
        }
      }
    }
    {
      auto out = files.open("traps.csv");
      CsvWriter csv(out);
      csv.header({"marked_n", "left", "mass", "center", "theta", "env_seed"});
      const double scale = std::pow(static_cast<double>(cfg.N), 1.0 / s);
      for (const auto& r : envs) {
        man.trap_counts.push_back(static_cast<long>(r.traps.size()));
        for (const auto& t : r.traps) {
          csv << t.marked_n << t.left << t.mass << t.center << t.mass / scale
              << r.env_seed;
          csv.end_row();
        }
      }
    }
    man.timings.push_back({"environments", sw3.seconds()});

    // Point process, Gamma and normalized times.
    Stopwatch sw4;
    std::vector<double> gammas, locations;
    {
      auto out = files.open("points.csv");
      write_points_csv(out, envs, cfg.N, s, &gammas, &locations);
    }
    {
      auto out = files.open("tn.csv");
      try {
        write_tn_csv(out, envs, cfg.N, s);
      } catch (const OutOfRegime& ex) {
        man.notes.push_back(std::string("tn.csv incomplete: ") + ex.what());
      } catch (const InsufficientData& ex) {
        man.notes.push_back(std::string("tn.csv incomplete: ") + ex.what());
      }
    }
    man.timings.push_back({"limits", sw4.seconds()});

    Stopwatch sw5;
    auto try_test = [&](const std::string& name, auto&& fn) {
      try {
        man.tests.emplace_back(name, fn());
      } catch (const InsufficientData& ex) {
        man.notes.push_back(name + " skipped: " + ex.what());
      }
    };
    try_test("gamma_exp1", [&] { return exp1_test(gammas); });
    try_test("trap_location_uniform", [&] {
      return ks_test(locations,
                     [](double x) { return std::clamp(x, 0.0, 1.0); });
    });
    try_test("trap_count_dispersion", [&] {
      std::vector<long long> c(man.trap_counts.begin(), man.trap_counts.end());
      return dispersion_test(c);
    });
    man.timings.push_back({"tests", sw5.seconds()});
    finish(true);
  } catch (const std::exception& ex) {
    man.error = ex.what();
    finish(false);
  }
  return man;
}

Plan describe(const ExperimentConfig& cfg) {
  const auto violations = config_violations(cfg);
  if (!violations.empty()) {
    std::string msg = "invalid config:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConfigError(msg);
  }
  Plan plan;
  plan.stages = kStages;
  const std::uint64_t moment_seed =
      derive_key(cfg.seed, StreamDomain::kAuxiliary, 2);
  plan.burn_in = law_burn_in(cfg.law, 1e-12, moment_seed);
  const LyapunovEstimate ly =
      lyapunov_exponent(cfg.law, std::min<long>(cfg.lyapunov_n, 2000),
                        std::min(cfg.lyapunov_replicas, 10),
                        derive_key(cfg.seed, StreamDomain::kAuxiliary, 1));
  const double tol = std::min(cfg.tail_tol, cfg.tail_eps);
  const Margins margins = initial_margins(ly.value, plan.burn_in, tol);
  // Only the layers right of N - 1 matter for the cutoff.
  const PreparedEnvironment prep = prepare_environment(
      cfg.law, cfg.N, environment_seed(cfg.seed, 0), cfg.N - 1,
      {plan.burn_in + 10, margins.right}, tol);
  const Cutoff c = certify_cutoff(prep.chain, cfg.N, cfg.tail_eps);
  plan.cutoff_l = c.l;
  plan.cutoff_certificate = c.certificate;
  plan.right_slack = std::max(prep.right_slack, c.l + 1);
  plan.window_first = -margins.left;
  plan.window_last = cfg.N + plan.right_slack;
  const double layers =
      static_cast<double>(plan.window_last - plan.window_first + 1);
  plan.memory_mb = layers * bytes_per_layer(cfg.law.m) / (1024.0 * 1024.0);
  plan.streaming = cfg.N > 1'000'000 || plan.memory_mb > cfg.memory_cap_mb;
  return plan;
}

}  // namespace striprw
