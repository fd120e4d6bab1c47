#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "striprw/algebra.hpp"
#include "striprw/env.hpp"
#include "striprw/occupation.hpp"
#include "striprw/traps.hpp"
#include "striprw/walker.hpp"
#include "striprw/stats.hpp"

namespace striprw {

struct ExperimentConfig {
  EnvironmentLaw law;
  std::string law_json;  // canonical text of `law`, part of the hash
  long N = 1000;
  double delta = 0.2;
  int replicas = 100;
  int environments = 1;
  std::uint64_t seed = 1;
  double tail_tol = 1e-10;
  double tail_eps = 1e-9;
  std::vector<double> alpha_grid;
  std::optional<double> s;  // solved when absent
  long lyapunov_n = 2000;
  int lyapunov_replicas = 50;
  long moment_n = 200;
  int moment_replicas = 2000;
  double memory_cap_mb = 2048.0;
  std::string output_dir = "out";
  int workers = 1;
};

// Every violated invariant, empty when valid.
std::vector<std::string> config_violations(const ExperimentConfig& cfg);

// Throws ConfigError carrying config_violations.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);

// FNV-1a over the canonical config text with output_dir and workers removed.
std::string config_hash(const ExperimentConfig& cfg);

// "a:b:step" inclusive of b up to rounding, or a comma list.
std::vector<double> parse_grid(const std::string& text);

const char* code_version();

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string version;
  std::vector<StageTiming> timings;
  double s_hat = 0.0;
  bool s_from_config = false;
  double lambda_hat = 0.0;
  std::vector<long> trap_counts;  // per environment
  std::vector<std::pair<std::string, TestReport>> tests;
  std::vector<std::string> notes;
  std::vector<std::string> artifacts;
  bool ok = false;
  std::string error;

  // Without timings when `timings` is false.
  std::string to_json(bool timings = true) const;
};

// Full pipeline. Artifacts are written as name.partial and renamed once
// every stage has succeeded; on failure they stay partial and the manifest
// records the error.
RunManifest run_experiment(const ExperimentConfig& cfg);

struct Plan {
  std::vector<std::string> stages;
  long window_first = 0;
  long window_last = 0;
  long burn_in = 0;
  long right_slack = 0;
  long cutoff_l = 0;
  double cutoff_certificate = 0.0;
  double memory_mb = 0.0;
  bool streaming = false;

  std::string to_json() const;
};

// Dry run: computes burn-in and the certified cutoff for the first
// environment without writing anything.
Plan describe(const ExperimentConfig& cfg);

// Bytes held per layer by an environment window plus its chain state.
double bytes_per_layer(int m);

// CSV helpers: 17 significant digits, RFC 4180 quoting.
std::string csv_number(double x);
std::string csv_field(const std::string& s);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void header(const std::vector<std::string>& names);
  CsvWriter& operator<<(double x);
  CsvWriter& operator<<(long long x);
  CsvWriter& operator<<(long x) { return *this << static_cast<long long>(x); }
  CsvWriter& operator<<(int x) { return *this << static_cast<long long>(x); }
  CsvWriter& operator<<(std::uint64_t x);
  CsvWriter& operator<<(const std::string& s);
  void end_row();

 private:
  void sep();
  std::ostream& out_;
  bool first_ = true;
};

// Reads a numeric CSV with a header row; returns the named column.
std::vector<double> read_csv_column(const std::string& path,
                                    const std::string& column);
// Header names and rows of a numeric CSV.
std::vector<std::vector<double>> read_csv(const std::string& path,
                                          std::vector<std::string>* header);

// Window sized so that the chain is certified on [chain_first, N + slack],
// the profile over [0, N-1] meets tail_tol and the cutoff meets tail_eps.
// Margins double on NeedsWiderWindow.
struct PreparedEnvironment {
  std::uint64_t env_seed = 0;
  EnvironmentWindow env;
  ChainState chain;
  long left_margin = 0;
  long right_slack = 0;
};

struct Margins {
  long left = 0;
  long right = 0;
};

// Initial margins from the burn-in and the decay rate -lambda.
Margins initial_margins(double lambda, long burn_in, double tol);

PreparedEnvironment prepare_environment(const EnvironmentLaw& law, long N,
                                        std::uint64_t env_seed,
                                        long chain_first, Margins margins,
                                        double tol);

struct AnalysisOptions {
  long N = 1000;
  double delta = 0.2;
  double s = 0.5;
  int replicas = 100;
  double tail_tol = 1e-10;
  double tail_eps = 1e-9;
  int workers = 1;
  Site start{0, 1};
};

struct WalkRecord {
  long long hit_time = 0;
  long long occupation_time = 0;
  std::vector<long long> trap_visits;  // xi at (n_j, k_j) per trap
};

struct EnvironmentResult {
  std::uint64_t env_seed = 0;
  OccupationProfile profile;
  Cutoff cutoff;
  std::vector<TrapRecord> traps;
  std::vector<int> rungs;  // k_j per trap
  std::vector<WalkRecord> walks;
  double expected_T = 0.0;  // sum of rho over [0, N-1]
};

// Profile, cutoff, traps and replica walks on a fixed window. Walk i uses
// stream i of derive_key(env_seed, kReplica, 0). Throws NeedsWiderWindow
// when the window is too short on either side.
EnvironmentResult analyze_window(const EnvironmentWindow& env,
                                 std::uint64_t env_seed,
                                 const AnalysisOptions& opts);

// analyze_window on environment `e` of the law, widening on demand.
EnvironmentResult analyze_environment(const EnvironmentLaw& law,
                                      std::uint64_t seed, long e,
                                      Margins margins,
                                      const AnalysisOptions& opts);

// points.csv rows, one per (environment, replica, trap); `gammas` receives
// the unflagged Gamma values and `locations` the unclipped locations.
void write_points_csv(std::ostream& out,
                      const std::vector<EnvironmentResult>& envs, long N,
                      double s, std::vector<double>* gammas = nullptr,
                      std::vector<double>* locations = nullptr);

// tn.csv rows, one per (environment, replica). Throws OutOfRegime for
// s >= 2.
void write_tn_csv(std::ostream& out,
                  const std::vector<EnvironmentResult>& envs, long N,
                  double s);

void write_profile_csv(std::ostream& out, const OccupationProfile& p);
void write_traps_csv(std::ostream& out, const std::vector<TrapRecord>& traps,
                     long N, double s, const std::uint64_t* env_seed = nullptr);

// Seed of environment e under a master seed.
std::uint64_t environment_seed(std::uint64_t seed, long e);

}  // namespace striprw
