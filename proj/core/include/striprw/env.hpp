#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "striprw/matrix.hpp"

namespace striprw {

// Transition probabilities of one layer: P to the right, Q to the left, R
// within the layer. All three are m x m.
struct Triple {
  Matrix P, Q, R;

  int m() const { return static_cast<int>(P.rows()); }
  static Triple scalar(double p, double q, double r);
};

// Rungs are 1-based.
struct Site {
  long n = 0;
  int i = 1;
  friend bool operator==(const Site&, const Site&) = default;
};

struct Violation {
  long layer = 0;
  std::string matrix;  // "P", "Q", "R", "P+Q+R", "(I-R)^-1 P", ...
  int row = -1;
  int col = -1;
  double value = 0.0;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kRenormalizeTol = 1e-9;

// Checks nonnegativity, row sums, ||R|| < 1 - eps and the entrywise bounds on
// (I-R)^-1 P and (I-R)^-1 Q. Throws StructuralError on shape mismatch.
ValidationReport validate_triple(const Triple& t, double epsilon,
                                 long layer = 0);

// Rescales rows of P+Q+R that miss 1 by at most kRenormalizeTol; larger
// deviations are left for validation to report.
void renormalize_rows(Triple& t);

class EnvironmentWindow {
 public:
  EnvironmentWindow() = default;
  EnvironmentWindow(long first_layer, const std::vector<Triple>& triples,
                    double epsilon);

  int m() const { return m_; }
  double epsilon() const { return epsilon_; }
  long first() const { return first_; }
  long last() const { return first_ + static_cast<long>(layers_) - 1; }
  std::size_t size() const { return layers_; }
  bool contains(long n) const { return n >= first() && n <= last(); }

  ConstMatrixMap P(long n) const { return map(n, 0); }
  ConstMatrixMap Q(long n) const { return map(n, 1); }
  ConstMatrixMap R(long n) const { return map(n, 2); }
  Triple triple(long n) const;

  // Scalar accessors for m = 1.
  double p(long n) const { return data_[offset(n)]; }
  double q(long n) const { return data_[offset(n) + 1]; }
  double r(long n) const { return data_[offset(n) + 2]; }

  // Index of the law atom each layer was drawn from, or empty when the window
  // was built from explicit triples.
  const std::vector<int>& atom_index() const { return atom_index_; }
  void set_atom_index(std::vector<int> idx) { atom_index_ = std::move(idx); }

  // Restriction to [a, b], which must lie inside the window.
  EnvironmentWindow slice(long a, long b) const;

 private:
  std::size_t offset(long n) const {
    return static_cast<std::size_t>(n - first_) * 3 * m_ * m_;
  }
  ConstMatrixMap map(long n, int which) const {
    return ConstMatrixMap(data_.data() + offset(n) + which * m_ * m_, m_, m_);
  }

  long first_ = 0;
  std::size_t layers_ = 0;
  int m_ = 0;
  double epsilon_ = 0.0;
  std::vector<double> data_;  // per layer: P, Q, R, each column-major
  std::vector<int> atom_index_;
};

ValidationReport validate_environment(const EnvironmentWindow& env);

enum class LawKind { kMixture, kModel1, kBoundedJump };

struct EnvironmentLaw {
  LawKind kind = LawKind::kMixture;
  int m = 1;
  double epsilon = 0.0;
  // Strip atoms. For kBoundedJump these are the embedded layer triples, one
  // per combination of site atoms (site-atom index of rung i is digit i-1 of
  // the atom index in base jump_atoms.size()).
  std::vector<Triple> atoms;
  std::vector<double> weights;
  // kBoundedJump only: per-site jump laws p(x, k), k = -m..m, and their
  // weights (site atoms are i.i.d. across x).
  std::vector<std::vector<double>> jump_atoms;
  std::vector<double> jump_weights;

  // Throws ConfigError listing every problem.
  void validate() const;
  int sample_atom(double u) const;
};

// Model 1 law: p_n drawn from `ps` with `weights`, q = 1 - p, r = 0.
EnvironmentLaw model1_law(const std::vector<double>& ps,
                          const std::vector<double>& weights, double epsilon);
EnvironmentLaw mixture_law(std::vector<Triple> atoms,
                           std::vector<double> weights, double epsilon);

// Layer n depends only on (seed, n).
EnvironmentWindow sample_iid_environment(const EnvironmentLaw& law, long a,
                                         long b, std::uint64_t seed);
Triple sample_layer(const EnvironmentLaw& law, long n, std::uint64_t seed,
                    int* atom = nullptr);
double layer_uniform(long n, std::uint64_t seed);

// Strip site (n, i) represents the integer x = n*m + (i-1).
inline long embed_site(long x, int m, int* rung) {
  long n = x >= 0 ? x / m : -((-x + m - 1) / m);
  *rung = static_cast<int>(x - n * m) + 1;
  return n;
}
inline long unembed_site(const Site& z, int m) { return z.n * m + (z.i - 1); }

// Triple of a layer whose m sites carry jump laws jumps[0..m-1], each of
// length 2m+1 indexed by k + m.
Triple embed_layer(const std::vector<std::vector<double>>& jumps, int m);

// Strip law for an i.i.d. bounded-jump law on Z with jump bound m.
EnvironmentLaw embed_bounded_jump(
    const std::vector<std::vector<double>>& jump_atoms,
    const std::vector<double>& jump_weights, int m, double epsilon);

struct Transition {
  Site to;
  double prob;
};

// P row, then Q row, then R row. Throws NeedsWiderWindow at the window edge.
std::vector<Transition> transition_distribution(const EnvironmentWindow& env,
                                                const Site& z);

// JSON config: {"m", "epsilon", "kind", "atoms", "weights", "renormalize"}.
EnvironmentLaw law_from_json_text(const std::string& text);
EnvironmentLaw load_law(const std::string& path);
std::string law_to_json_text(const EnvironmentLaw& law);

// One layer per line: {"n":int,"P":[[...]],"Q":[[...]],"R":[[...]]}.
void write_jsonl(const EnvironmentWindow& env, std::ostream& out);
EnvironmentWindow read_jsonl(std::istream& in, double epsilon);
EnvironmentWindow load_jsonl(const std::string& path, double epsilon);

}  // namespace striprw
