// striprw: command line front end for the strip random walk library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "striprw/algebra.hpp"
#include "striprw/env.hpp"
#include "striprw/error.hpp"
#include "striprw/experiment.hpp"
#include "striprw/occupation.hpp"
#include "striprw/parallel.hpp"
#include "striprw/stats.hpp"
#include "striprw/traps.hpp"
#include "striprw/walker.hpp"

namespace {

using namespace striprw;
using nlohmann::json;
namespace fs = std::filesystem;

struct Globals {
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out;
};

// Writes to `path`, or stdout when empty. The file only appears under its
// final name after the body succeeded.
template <typename Body>
void emit(const std::string& path, Body&& body) {
  if (path.empty()) {
    body(std::cout);
    return;
  }
  const std::string partial = path + ".partial";
  {
    std::ofstream out(partial, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    body(out);
  }
  fs::rename(partial, path);
}

std::pair<long, long> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("range must be a:b");
  return {std::stol(text.substr(0, colon)), std::stol(text.substr(colon + 1))};
}

Site parse_site(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("site must be n,i");
  return {std::stol(text.substr(0, comma)),
          std::stoi(text.substr(comma + 1))};
}

std::vector<double> load_samples(const std::string& path,
                                 const std::string& column) {
  std::vector<std::string> header;
  if (!column.empty()) return read_csv_column(path, column);
  const auto rows = read_csv(path, &header);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.front());
  return out;
}

std::string report_json(const ValidationReport& rep) {
  json j;
  j["ok"] = rep.empty();
  json v = json::array();
  for (const auto& x : rep) {
    v.push_back({{"layer", x.layer},
                 {"matrix", x.matrix},
                 {"row", x.row},
                 {"col", x.col},
                 {"value", x.value},
                 {"message", x.message}});
  }
  j["violations"] = v;
  return j.dump(2);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walks in random environment on a strip"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output file, or directory for run/limits");

  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  // validate
  std::string v_config, v_env;
  double v_eps = 0.0;
  auto* validate = sub("validate", "Check a law, experiment or window file");
  validate->add_option("--config", v_config, "Law or experiment JSON");
  validate->add_option("--env", v_env, "Environment window JSONL");
  validate->add_option("--epsilon", v_eps, "Ellipticity bound for --env");

  // sample
  std::string sa_config, sa_range = "0:1000";
  auto* sample = sub("sample", "Sample an i.i.d. window as JSONL");
  sample->add_option("--config", sa_config, "Law JSON")->required();
  sample->add_option("--range", sa_range, "Layers a:b")->capture_default_str();

  // lyapunov
  std::string l_config;
  long l_n = 5000;
  int l_reps = 200;
  auto* lyap = sub("lyapunov", "Estimate the Lyapunov exponent");
  lyap->add_option("--config", l_config, "Law JSON")->required();
  lyap->add_option("--n", l_n)->capture_default_str();
  lyap->add_option("--replicas", l_reps)->capture_default_str();

  // rcurve
  std::string r_config, r_alphas = "0:2:0.05";
  long r_n = 200;
  int r_reps = 2000;
  auto* rcurve = sub("rcurve", "Moment Lyapunov exponent on a grid");
  rcurve->add_option("--config", r_config, "Law JSON")->required();
  rcurve->add_option("--alphas", r_alphas, "a:b:step or a list")
      ->capture_default_str();
  rcurve->add_option("--n", r_n)->capture_default_str();
  rcurve->add_option("--replicas", r_reps)->capture_default_str();

  // solve-s
  std::string s_config;
  double s_tol = 1e-3, s_amax = 10.0;
  long s_n = 200;
  int s_reps = 2000;
  auto* solve = sub("solve-s", "Root of r(s) = 1");
  solve->add_option("--config", s_config, "Law JSON")->required();
  solve->add_option("--tol", s_tol)->capture_default_str();
  solve->add_option("--n", s_n)->capture_default_str();
  solve->add_option("--replicas", s_reps)->capture_default_str();
  solve->add_option("--alpha-max", s_amax)->capture_default_str();

  // profile
  std::string p_env, p_range;
  double p_tol = 1e-10, p_eps = 0.0;
  auto* profile = sub("profile", "Expected occupations rho, rho_y and w");
  profile->add_option("--env", p_env, "Window JSONL")->required();
  profile->add_option("--range", p_range, "Layers a:b")->required();
  profile->add_option("--tail-tol", p_tol)->capture_default_str();
  profile->add_option("--epsilon", p_eps);

  // simulate
  std::string m_env, m_start = "0,1";
  long m_N = 1000;
  int m_reps = 1000;
  double m_eps = 1e-9, m_ellip = 0.0;
  auto* simulate = sub("simulate", "Quenched walks: hitting and occupation");
  simulate->add_option("--env", m_env, "Window JSONL")->required();
  simulate->add_option("--start", m_start, "n,i")->capture_default_str();
  simulate->add_option("--N", m_N)->capture_default_str();
  simulate->add_option("--replicas", m_reps)->capture_default_str();
  simulate->add_option("--tail-eps", m_eps)->capture_default_str();
  simulate->add_option("--epsilon", m_ellip);

  // traps
  std::string t_env, t_profile;
  long t_N = 0;
  double t_delta = 0.2, t_s = 0.5;
  auto* traps = sub("traps", "Marked sites and trap masses");
  traps->add_option("--env", t_env, "Window JSONL (checked for coverage)");
  traps->add_option("--profile", t_profile, "profile.csv")->required();
  traps->add_option("--N", t_N)->required();
  traps->add_option("--delta", t_delta)->capture_default_str();
  traps->add_option("--s", t_s)->capture_default_str();

  // limits
  std::string lm_env, lm_config;
  long lm_N = 1000;
  int lm_reps = 100, lm_envs = 1;
  double lm_delta = 0.2, lm_s = 0.5, lm_tol = 1e-10, lm_eps = 1e-9;
  auto* limits = sub("limits", "Trap point process, Gamma and T_N");
  limits->add_option("--env", lm_env, "Window JSONL");
  limits->add_option("--config", lm_config, "Law JSON, sampled instead");
  limits->add_option("--environments", lm_envs)->capture_default_str();
  limits->add_option("--N", lm_N)->capture_default_str();
  limits->add_option("--replicas", lm_reps)->capture_default_str();
  limits->add_option("--delta", lm_delta)->capture_default_str();
  limits->add_option("--s", lm_s)->capture_default_str();
  limits->add_option("--tail-tol", lm_tol)->capture_default_str();
  limits->add_option("--tail-eps", lm_eps)->capture_default_str();

  // oracle
  double o_s = 0.5, o_delta = 0.01;
  long o_samples = 100000;
  auto* oracle = sub("oracle", "Samples of the Poisson-sum stable oracle");
  oracle->add_option("--s", o_s)->capture_default_str();
  oracle->add_option("--delta", o_delta, "Floor for s >= 1")
      ->capture_default_str();
  oracle->add_option("--samples", o_samples)->capture_default_str();

  // test
  std::string te_kind, te_a, te_b, te_col;
  auto* test = sub("test", "Goodness of fit on CSV samples");
  test->add_option("kind", te_kind, "ks | exp | exp1 | uniform | dispersion")
      ->required();
  test->add_option("--a", te_a, "First sample CSV")->required();
  test->add_option("--b", te_b, "Second sample CSV (ks)");
  test->add_option("--column", te_col, "Column name (default: first)");

  // run, describe
  std::string ru_config;
  auto* run = sub("run", "Full pipeline from an experiment config");
  run->add_option("--config", ru_config, "Experiment JSON")->required();
  std::string de_config;
  auto* desc = sub("describe", "Dry-run plan for an experiment config");
  desc->add_option("--config", de_config, "Experiment JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      if (!v_config.empty()) {
        std::ifstream in(v_config);
        if (!in) throw ConfigError("cannot open " + v_config);
        std::stringstream ss;
        ss << in.rdbuf();
        const json j = json::parse(ss.str());
        if (j.contains("law")) {
          config_from_json_text(ss.str());
        } else {
          law_from_json_text(ss.str()).validate();
        }
        std::cout << "{\"ok\": true}\n";
      }
      if (!v_env.empty()) {
        const auto env = load_jsonl(v_env, v_eps);
        const auto rep = validate_environment(env);
        std::cout << report_json(rep) << "\n";
        return rep.empty() ? 0 : 1;
      }
      if (v_config.empty() && v_env.empty()) {
        throw ConfigError("validate needs --config or --env");
      }
    } else if (*sample) {
      const auto law = load_law(sa_config);
      const auto [a, b] = parse_range(sa_range);
      const auto env = sample_iid_environment(law, a, b, g.seed);
      emit(g.out, [&](std::ostream& o) { write_jsonl(env, o); });
    } else if (*lyap) {
      const auto law = load_law(l_config);
      const auto est = lyapunov_exponent(law, l_n, l_reps, g.seed, g.workers);
      json j = {{"lambda_hat", est.value}, {"stderr", est.std_error},
                {"n", est.n},              {"replicas", est.replicas},
                {"burn_in", est.burn_in}};
      emit(g.out, [&](std::ostream& o) { o << j.dump(2) << "\n"; });
    } else if (*rcurve) {
      const auto law = load_law(r_config);
      MomentOptions mo;
      mo.workers = g.workers;
      mo.burn_in = law_burn_in(law, 1e-12, g.seed);
      const auto grid = parse_grid(r_alphas);
      std::vector<MomentEstimate> rows;
      for (double a : grid) {
        rows.push_back(moment_lyapunov(law, a, r_n, r_reps, g.seed, mo));
        if (!rows.back().warning.empty()) {
          std::cerr << "alpha " << a << ": " << rows.back().warning << "\n";
        }
      }
      emit(g.out, [&](std::ostream& o) {
        CsvWriter csv(o);
        csv.header({"alpha", "r_hat", "stderr"});
        for (const auto& r : rows) {
          csv << r.alpha << r.r_hat << r.std_error;
          csv.end_row();
        }
      });
    } else if (*solve) {
      const auto law = load_law(s_config);
      MomentOptions mo;
      mo.workers = g.workers;
      const auto res = solve_s(law, s_tol, s_n, s_reps, g.seed, s_amax, mo);
      json j = {{"s_hat", res.s_hat},
                {"ci_lo", res.ci_lo},
                {"ci_hi", res.ci_hi},
                {"diffusive", res.diffusive}};
      emit(g.out, [&](std::ostream& o) { o << j.dump(2) << "\n"; });
    } else if (*profile) {
      const auto env = load_jsonl(p_env, p_eps);
      const auto [a, b] = parse_range(p_range);
      const auto chain = build_chain(env, a, p_tol);
      OccupationOptions oo;
      oo.tail_tol = p_tol;
      const auto prof = rho_profile(chain, a, b, oo);
      emit(g.out, [&](std::ostream& o) { write_profile_csv(o, prof); });
    } else if (*simulate) {
      const auto env = load_jsonl(m_env, m_ellip);
      const Site start = parse_site(m_start);
      const auto chain = build_chain(env, std::min(start.n, m_N - 1),
                                     std::min(m_eps, 1e-10));
      const Cutoff cut = certify_cutoff(chain, m_N, m_eps);
      if (cut.layer > env.last()) {
        throw NeedsWiderWindow("cutoff layer " + std::to_string(cut.layer) +
                                   " is past the window",
                               cut.layer - env.last(), false);
      }
      const Walker walker(env);
      const auto key = derive_key(g.seed, StreamDomain::kReplica, 0);
      const auto runs = parallel_map<TrajectorySummary>(
          static_cast<std::size_t>(m_reps), g.workers, [&](std::size_t i) {
            Rng rng(key, i);
            RunOptions ro;
            ro.record_sites = false;
            return walker.run_until(start, m_N, cut.layer, rng, ro);
          });
      emit(g.out, [&](std::ostream& o) {
        CsvWriter csv(o);
        csv.header({"replica", "hit_time", "occupation_time", "cutoff_l"});
        for (std::size_t i = 0; i < runs.size(); ++i) {
          csv << static_cast<long long>(i) << runs[i].hit_time
              << runs[i].occupation_time << cut.l;
          csv.end_row();
        }
      });
    } else if (*traps) {
      std::vector<std::string> header;
      const auto rows = read_csv(t_profile, &header);
      auto col = [&](const std::string& name) {
        for (std::size_t k = 0; k < header.size(); ++k) {
          if (header[k] == name) return k;
        }
        throw ConfigError("profile has no column " + name);
      };
      const auto cn = col("n"), cr = col("rho"), cw = col("w");
      if (rows.empty() || rows.front()[cn] != 0.0) {
        throw StructuralError("profile must start at layer 0");
      }
      if (!t_env.empty()) {
        const auto env = load_jsonl(t_env, 0.0);
        if (env.first() > 0 || env.last() < t_N - 1) {
          throw StructuralError("window does not cover [0, N-1]");
        }
      }
      std::vector<double> w, rho;
      for (const auto& r : rows) {
        rho.push_back(r[cr]);
        w.push_back(r[cw]);
      }
      const auto recs = detect_traps(w, rho, t_N, t_delta, t_s);
      emit(g.out, [&](std::ostream& o) { write_traps_csv(o, recs, t_N, t_s); });
    } else if (*limits) {
      AnalysisOptions ao;
      ao.N = lm_N;
      ao.delta = lm_delta;
      ao.s = lm_s;
      ao.replicas = lm_reps;
      ao.tail_tol = lm_tol;
      ao.tail_eps = lm_eps;
      ao.workers = g.workers;
      std::vector<EnvironmentResult> envs;
      if (!lm_config.empty()) {
        const auto law = load_law(lm_config);
        const auto ly = lyapunov_exponent(law, 2000, 20, g.seed, g.workers);
        const Margins mg = initial_margins(ly.value, law_burn_in(law, 1e-12, g.seed),
                                           std::min(lm_tol, lm_eps));
        for (long e = 0; e < lm_envs; ++e) {
          envs.push_back(analyze_environment(law, g.seed, e, mg, ao));
        }
      } else if (!lm_env.empty()) {
        envs.push_back(analyze_window(load_jsonl(lm_env, 0.0), g.seed, ao));
      } else {
        throw ConfigError("limits needs --env or --config");
      }
      const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
      fs::create_directories(dir);
      emit((dir / "points.csv").string(), [&](std::ostream& o) {
        write_points_csv(o, envs, lm_N, lm_s);
      });
      emit((dir / "tn.csv").string(), [&](std::ostream& o) {
        write_tn_csv(o, envs, lm_N, lm_s);
      });
    } else if (*oracle) {
      const auto xs = stable_sum_samples(o_s, o_delta, o_samples, g.seed,
                                         g.workers);
      emit(g.out, [&](std::ostream& o) {
        CsvWriter csv(o);
        csv.header({"value"});
        for (double x : xs) {
          csv << x;
          csv.end_row();
        }
      });
    } else if (*test) {
      const auto a = load_samples(te_a, te_col);
      TestReport rep;
      if (te_kind == "ks") {
        if (te_b.empty()) throw ConfigError("ks needs --b");
        rep = ks_test(a, load_samples(te_b, te_col));
      } else if (te_kind == "exp") {
        rep = exponentiality_test(a);
      } else if (te_kind == "exp1") {
        rep = exp1_test(a);
      } else if (te_kind == "uniform") {
        rep = ks_test(a, [](double x) { return std::clamp(x, 0.0, 1.0); });
      } else if (te_kind == "dispersion") {
        std::vector<long long> counts;
        for (double x : a) counts.push_back(std::llround(x));
        rep = dispersion_test(counts);
      } else {
        throw ConfigError("unknown test '" + te_kind + "'");
      }
      emit(g.out, [&](std::ostream& o) { o << rep.to_json() << "\n"; });
    } else if (*run) {
      auto cfg = load_config(ru_config);
      if (app.get_option("--seed")->count() > 0) cfg.seed = g.seed;
      if (app.get_option("--workers")->count() > 0) cfg.workers = g.workers;
      if (!g.out.empty()) cfg.output_dir = g.out;
      const auto man = run_experiment(cfg);
      if (!man.ok) {
        std::cerr << "run failed: " << man.error << "\n";
        return 1;
      }
      std::cout << man.to_json(true) << "\n";
    } else if (*desc) {
      auto cfg = load_config(de_config);
      if (app.get_option("--seed")->count() > 0) cfg.seed = g.seed;
      std::cout << describe(cfg).to_json() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
