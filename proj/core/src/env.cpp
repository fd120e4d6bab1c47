#include "striprw/env.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "striprw/error.hpp"
#include "striprw/rng.hpp"

namespace striprw {

using nlohmann::json;

Triple Triple::scalar(double p, double q, double r) {
  Triple t;
  t.P = Matrix::Constant(1, 1, p);
  t.Q = Matrix::Constant(1, 1, q);
  t.R = Matrix::Constant(1, 1, r);
  return t;
}

namespace {

void check_shape(const Triple& t, long layer) {
  const auto m = t.P.rows();
  if (m < 1 || m > kMaxWidth || t.P.cols() != m || t.Q.rows() != m ||
      t.Q.cols() != m || t.R.rows() != m || t.R.cols() != m) {
    throw StructuralError("layer " + std::to_string(layer) +
                          ": P, Q, R must be square of equal size in [1, " +
                          std::to_string(kMaxWidth) + "]");
  }
}

std::string fmt_value(double x) {
  std::ostringstream os;
  os << std::setprecision(12) << x;
  return os.str();
}

}  // namespace

ValidationReport validate_triple(const Triple& t, double epsilon, long layer) {
  check_shape(t, layer);
  ValidationReport out;
  const int m = t.m();
  auto add = [&](std::string mat, int i, int j, double v, std::string msg) {
    out.push_back({layer, std::move(mat), i, j, v, std::move(msg)});
  };
  const Matrix* mats[3] = {&t.P, &t.Q, &t.R};
  const char* names[3] = {"P", "Q", "R"};
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const double v = (*mats[k])(i, j);
        if (!(v >= 0.0) || v > 1.0) {
          add(names[k], i, j, v,
              std::string("entry ") + fmt_value(v) + " outside [0,1]");
        }
      }
    }
  }
  const Matrix sum = t.P + t.Q + t.R;
  for (int i = 0; i < m; ++i) {
    const double s = sum.row(i).sum();
    if (std::abs(s - 1.0) > kStochasticTol) {
      add("P+Q+R", i, -1, s,
          "row sum " + fmt_value(s) + " at layer " + std::to_string(layer));
    }
  }
  const double rn = norm(t.R);
  if (rn >= 1.0 - epsilon) {
    add("R", -1, -1, rn,
        "||R|| >= 1-eps (" + fmt_value(rn) + " >= " +
            fmt_value(1.0 - epsilon) + ")");
  }
  if (rn < 1.0) {
    const Matrix inv =
        (Matrix::Identity(m, m) - t.R).partialPivLu().inverse();
    const Matrix ip = inv * t.P;
    const Matrix iq = inv * t.Q;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (!(ip(i, j) > epsilon)) {
          add("(I-R)^-1 P", i, j, ip(i, j),
              "entry " + fmt_value(ip(i, j)) + " <= eps");
        }
        if (!(iq(i, j) > epsilon)) {
          add("(I-R)^-1 Q", i, j, iq(i, j),
              "entry " + fmt_value(iq(i, j)) + " <= eps");
        }
      }
    }
  }
  return out;
}

void renormalize_rows(Triple& t) {
  for (int i = 0; i < t.m(); ++i) {
    const double s = t.P.row(i).sum() + t.Q.row(i).sum() + t.R.row(i).sum();
    if (s > 0 && std::abs(s - 1.0) <= kRenormalizeTol) {
      t.P.row(i) /= s;
      t.Q.row(i) /= s;
      t.R.row(i) /= s;
    }
  }
}

EnvironmentWindow::EnvironmentWindow(long first_layer,
                                     const std::vector<Triple>& triples,
                                     double epsilon)
    : first_(first_layer), layers_(triples.size()), epsilon_(epsilon) {
  if (triples.empty()) throw StructuralError("empty environment window");
  m_ = triples.front().m();
  const int mm = m_ * m_;
  data_.resize(layers_ * 3 * mm);
  for (std::size_t k = 0; k < layers_; ++k) {
    const Triple& t = triples[k];
    check_shape(t, first_ + static_cast<long>(k));
    if (t.m() != m_) {
      throw StructuralError("layer " + std::to_string(first_ + long(k)) +
                            " has width " + std::to_string(t.m()) +
                            ", expected " + std::to_string(m_));
    }
    double* dst = data_.data() + k * 3 * mm;
    MatrixMap(dst, m_, m_) = t.P;
    MatrixMap(dst + mm, m_, m_) = t.Q;
    MatrixMap(dst + 2 * mm, m_, m_) = t.R;
  }
}

Triple EnvironmentWindow::triple(long n) const {
  Triple t;
  t.P = P(n);
  t.Q = Q(n);
  t.R = R(n);
  return t;
}

EnvironmentWindow EnvironmentWindow::slice(long a, long b) const {
  if (a > b || !contains(a) || !contains(b)) {
    throw StructuralError("slice outside window");
  }
  EnvironmentWindow out;
  out.first_ = a;
  out.layers_ = static_cast<std::size_t>(b - a + 1);
  out.m_ = m_;
  out.epsilon_ = epsilon_;
  out.data_.assign(data_.begin() + offset(a), data_.begin() + offset(b + 1));
  if (!atom_index_.empty()) {
    out.atom_index_.assign(atom_index_.begin() + (a - first_),
                           atom_index_.begin() + (b - first_ + 1));
  }
  return out;
}

ValidationReport validate_environment(const EnvironmentWindow& env) {
  ValidationReport out;
  for (long n = env.first(); n <= env.last(); ++n) {
    auto v = validate_triple(env.triple(n), env.epsilon(), n);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void EnvironmentLaw::validate() const {
  std::vector<std::string> problems;
  if (m < 1 || m > kMaxWidth) problems.push_back("m out of range");
  if (!(epsilon > 0.0) || epsilon >= 1.0) {
    problems.push_back("epsilon must lie in (0,1)");
  }
  if (atoms.empty()) problems.push_back("no atoms");
  if (weights.size() != atoms.size()) {
    problems.push_back("weights and atoms differ in length");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) problems.push_back("negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    problems.push_back("weights sum to " + fmt_value(total));
  }
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    if (atoms[k].m() != m) {
      problems.push_back("atom " + std::to_string(k) + " has wrong width");
      continue;
    }
    for (const auto& v : validate_triple(atoms[k], epsilon)) {
      problems.push_back("atom " + std::to_string(k) + ": " + v.message);
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid environment law:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

int EnvironmentLaw::sample_atom(double u) const {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

EnvironmentLaw model1_law(const std::vector<double>& ps,
                          const std::vector<double>& weights, double epsilon) {
  EnvironmentLaw law;
  law.kind = LawKind::kModel1;
  law.m = 1;
  law.epsilon = epsilon;
  for (double p : ps) law.atoms.push_back(Triple::scalar(p, 1.0 - p, 0.0));
  law.weights = weights;
  return law;
}

EnvironmentLaw mixture_law(std::vector<Triple> atoms,
                           std::vector<double> weights, double epsilon) {
  EnvironmentLaw law;
  law.kind = LawKind::kMixture;
  law.m = atoms.empty() ? 1 : atoms.front().m();
  law.epsilon = epsilon;
  law.atoms = std::move(atoms);
  law.weights = std::move(weights);
  return law;
}

double layer_uniform(long n, std::uint64_t seed) {
  Rng rng(derive_key(seed, StreamDomain::kLayer), static_cast<std::uint64_t>(n));
  return rng.uniform();
}

Triple sample_layer(const EnvironmentLaw& law, long n, std::uint64_t seed,
                    int* atom) {
  const int k = law.sample_atom(layer_uniform(n, seed));
  if (atom) *atom = k;
  return law.atoms[k];
}

EnvironmentWindow sample_iid_environment(const EnvironmentLaw& law, long a,
                                         long b, std::uint64_t seed) {
  if (a > b) throw ConfigError("window requires a <= b");
  law.validate();
  std::vector<Triple> triples;
  std::vector<int> idx;
  triples.reserve(b - a + 1);
  idx.reserve(b - a + 1);
  for (long n = a; n <= b; ++n) {
    int k = 0;
    triples.push_back(sample_layer(law, n, seed, &k));
    idx.push_back(k);
  }
  EnvironmentWindow env(a, triples, law.epsilon);
  env.set_atom_index(std::move(idx));
  return env;
}

Triple embed_layer(const std::vector<std::vector<double>>& jumps, int m) {
  Triple t;
  t.P = Matrix::Zero(m, m);
  t.Q = Matrix::Zero(m, m);
  t.R = Matrix::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    const auto& p = jumps[i];
    if (static_cast<int>(p.size()) != 2 * m + 1) {
      throw ConfigError("jump law beyond the bound m=" + std::to_string(m));
    }
    for (int k = -m; k <= m; ++k) {
      const double mass = p[k + m];
      if (mass == 0.0) continue;
      int rung = 0;
      const long block = embed_site(i + k, m, &rung);
      Matrix& target = block == 1 ? t.P : block == -1 ? t.Q : t.R;
      target(i, rung - 1) += mass;
    }
  }
  return t;
}

EnvironmentLaw embed_bounded_jump(
    const std::vector<std::vector<double>>& jump_atoms,
    const std::vector<double>& jump_weights, int m, double epsilon) {
  if (m < 1 || m > kMaxWidth) throw ConfigError("jump bound out of range");
  if (jump_atoms.empty() || jump_atoms.size() != jump_weights.size()) {
    throw ConfigError("jump atoms and weights differ in length");
  }
  for (const auto& p : jump_atoms) {
    const int half = (static_cast<int>(p.size()) - 1) / 2;
    if (p.size() % 2 == 0) throw ConfigError("jump law needs odd length");
    double total = 0.0;
    for (int k = -half; k <= half; ++k) {
      const double v = p[k + half];
      if (v < 0.0) throw ConfigError("negative jump probability");
      if (std::abs(k) > m && v > 0.0) {
        throw ConfigError("jump of size " + std::to_string(std::abs(k)) +
                          " exceeds bound m=" + std::to_string(m));
      }
      total += v;
    }
    if (std::abs(total - 1.0) > kStochasticTol) {
      throw ConfigError("jump law sums to " + fmt_value(total));
    }
  }
  const int K = static_cast<int>(jump_atoms.size());
  long combos = 1;
  for (int i = 0; i < m; ++i) {
    combos *= K;
    if (combos > 100000) throw ConfigError("too many embedded atoms");
  }
  EnvironmentLaw law;
  law.kind = LawKind::kBoundedJump;
  law.m = m;
  law.epsilon = epsilon;
  law.jump_weights = jump_weights;
  // Normalize every site law to length 2m+1.
  for (const auto& p : jump_atoms) {
    const int half = (static_cast<int>(p.size()) - 1) / 2;
    std::vector<double> full(2 * m + 1, 0.0);
    for (int k = -std::min(half, m); k <= std::min(half, m); ++k) {
      full[k + m] = p[k + half];
    }
    law.jump_atoms.push_back(std::move(full));
  }
  for (long c = 0; c < combos; ++c) {
    std::vector<std::vector<double>> jumps(m);
    double w = 1.0;
    long rest = c;
    for (int i = 0; i < m; ++i) {
      const int a = static_cast<int>(rest % K);
      rest /= K;
      jumps[i] = law.jump_atoms[a];
      w *= jump_weights[a];
    }
    law.atoms.push_back(embed_layer(jumps, m));
    law.weights.push_back(w);
  }
  return law;
}

std::vector<Transition> transition_distribution(const EnvironmentWindow& env,
                                                const Site& z) {
  if (z.i < 1 || z.i > env.m()) throw StructuralError("rung out of range");
  if (z.n - 1 < env.first()) {
    throw NeedsWiderWindow("site at left window edge", 1, true);
  }
  if (z.n + 1 > env.last()) {
    throw NeedsWiderWindow("site at right window edge", 1, false);
  }
  const int m = env.m();
  std::vector<Transition> out;
  out.reserve(3 * m);
  const auto P = env.P(z.n), Q = env.Q(z.n), R = env.R(z.n);
  for (int j = 0; j < m; ++j) out.push_back({{z.n + 1, j + 1}, P(z.i - 1, j)});
  for (int j = 0; j < m; ++j) out.push_back({{z.n - 1, j + 1}, Q(z.i - 1, j)});
  for (int j = 0; j < m; ++j) out.push_back({{z.n, j + 1}, R(z.i - 1, j)});
  return out;
}

namespace {

Matrix matrix_from_json(const json& j, int m, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != m) {
    throw ConfigError(std::string(what) + " must have " + std::to_string(m) +
                      " rows");
  }
  Matrix out(m, m);
  for (int i = 0; i < m; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != m) {
      throw ConfigError(std::string(what) + " row has wrong length");
    }
    for (int k = 0; k < m; ++k) out(i, k) = j[i][k].get<double>();
  }
  return out;
}

json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  json rows = json::array();
  for (int i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < a.cols(); ++k) row.push_back(a(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

EnvironmentLaw law_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("law config: ") + e.what());
  }
  try {
    const int m = j.at("m").get<int>();
    const double eps = j.at("epsilon").get<double>();
    const std::string kind = j.value("kind", "mixture");
    const bool renorm = j.value("renormalize", false);
    std::vector<double> weights = j.at("weights").get<std::vector<double>>();
    const json& atoms = j.at("atoms");
    EnvironmentLaw law;
    if (kind == "model1") {
      if (m != 1) throw ConfigError("model1 law requires m=1");
      std::vector<Triple> triples;
      for (const auto& a : atoms) {
        if (a.is_number()) {
          const double p = a.get<double>();
          triples.push_back(Triple::scalar(p, 1.0 - p, 0.0));
        } else {
          auto v = a.get<std::vector<double>>();
          if (v.size() != 3) throw ConfigError("model1 atom must be [p,q,r]");
          triples.push_back(Triple::scalar(v[0], v[1], v[2]));
        }
      }
      law = mixture_law(std::move(triples), weights, eps);
      law.kind = LawKind::kModel1;
    } else if (kind == "mixture") {
      std::vector<Triple> triples;
      for (const auto& a : atoms) {
        Triple t;
        t.P = matrix_from_json(a.at("P"), m, "P");
        t.Q = matrix_from_json(a.at("Q"), m, "Q");
        t.R = matrix_from_json(a.at("R"), m, "R");
        triples.push_back(std::move(t));
      }
      law = mixture_law(std::move(triples), weights, eps);
    } else if (kind == "bounded_jump") {
      auto jumps = atoms.get<std::vector<std::vector<double>>>();
      law = embed_bounded_jump(jumps, weights, m, eps);
    } else {
      throw ConfigError("unknown law kind '" + kind + "'");
    }
    if (renorm) {
      for (auto& t : law.atoms) renormalize_rows(t);
    }
    law.validate();
    return law;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("law config: ") + e.what());
  }
}

EnvironmentLaw load_law(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return law_from_json_text(ss.str());
}

std::string law_to_json_text(const EnvironmentLaw& law) {
  json j;
  j["m"] = law.m;
  j["epsilon"] = law.epsilon;
  j["weights"] = law.weights;
  switch (law.kind) {
    case LawKind::kModel1: {
      j["kind"] = "model1";
      json atoms = json::array();
      for (const auto& t : law.atoms) {
        atoms.push_back({t.P(0, 0), t.Q(0, 0), t.R(0, 0)});
      }
      j["atoms"] = atoms;
      break;
    }
    case LawKind::kBoundedJump:
      j["kind"] = "bounded_jump";
      j["atoms"] = law.jump_atoms;
      j["weights"] = law.jump_weights;
      break;
    case LawKind::kMixture: {
      j["kind"] = "mixture";
      json atoms = json::array();
      for (const auto& t : law.atoms) {
        atoms.push_back({{"P", matrix_to_json(t.P)},
                         {"Q", matrix_to_json(t.Q)},
                         {"R", matrix_to_json(t.R)}});
      }
      j["atoms"] = atoms;
      break;
    }
  }
  return j.dump(2);
}

void write_jsonl(const EnvironmentWindow& env, std::ostream& out) {
  for (long n = env.first(); n <= env.last(); ++n) {
    nlohmann::ordered_json j;
    j["n"] = n;
    j["P"] = matrix_to_json(env.P(n));
    j["Q"] = matrix_to_json(env.Q(n));
    j["R"] = matrix_to_json(env.R(n));
    out << j.dump() << '\n';
  }
}

EnvironmentWindow read_jsonl(std::istream& in, double epsilon) {
  std::vector<Triple> triples;
  long first = 0;
  long expect = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("jsonl: ") + e.what());
    }
    if (!j.contains("n")) {
      // Optional header line carrying the window's epsilon.
      epsilon = j.value("epsilon", epsilon);
      continue;
    }
    const long n = j.at("n").get<long>();
    if (triples.empty()) {
      first = expect = n;
    }
    if (n != expect) {
      throw StructuralError("jsonl layers must be consecutive; got " +
                            std::to_string(n) + " after " +
                            std::to_string(expect - 1));
    }
    const int m = static_cast<int>(j.at("P").size());
    Triple t;
    t.P = matrix_from_json(j.at("P"), m, "P");
    t.Q = matrix_from_json(j.at("Q"), m, "Q");
    t.R = matrix_from_json(j.at("R"), m, "R");
    triples.push_back(std::move(t));
    ++expect;
  }
  if (triples.empty()) throw StructuralError("jsonl has no layers");
  return EnvironmentWindow(first, triples, epsilon);
}

EnvironmentWindow load_jsonl(const std::string& path, double epsilon) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return read_jsonl(in, epsilon);
}

}  // namespace striprw
