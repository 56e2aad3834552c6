#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cgn/rng.hpp"

namespace cgn::scm {

/// Node names of the bilateral causal graph, in topological order.
/// C is a parent of every node; each side forms the chain
/// Z -> Y -> H -> X, and every node also has its own exogenous noise.
inline constexpr std::array<const char*, 9> kNodes = {
    "C", "Z_T", "Z_R", "Y_T", "Y_R", "H_T", "H_R", "X_T", "X_R"};

/// Deterministic lookup table: value = table[parent indices..., noise index].
struct Mechanism {
  std::vector<int> dims;   // sizes of each index axis (parents then noise)
  std::vector<int> table;  // flattened row-major entries

  int at(std::span<const int> idx) const;
  bool operator==(const Mechanism&) const = default;
};

/// Finite structural causal model of the bilateral graph.
///
/// Lesion-state mechanisms (Z) may differ between sides -- that is what
/// makes a nontrivial symmetric prior satisfiable -- while the
/// shared-anatomy property requires the Y/H/X mechanisms and their noise
/// distributions to be identical across sides.
struct ScmSpec {
  std::vector<int> domain_C;
  std::vector<int> domain_H;
  // Z and Y domains are {0, 1} by construction.

  /// Exogenous noise distribution per node, keyed by node name.
  std::map<std::string, std::vector<double>> noise;

  Mechanism f_C;                 // [noise]           -> C index
  Mechanism f_Z_T, f_Z_R;       // [c][noise]        -> {0,1}
  Mechanism f_Y_T, f_Y_R;       // [c][z][noise]     -> {0,1}
  Mechanism f_H_T, f_H_R;       // [c][y][noise]     -> H index
  Mechanism f_X_T, f_X_R;       // [c][h][noise]     -> raw value
  bool shared_mechanisms = false;

  /// Throws std::invalid_argument naming the offending table or noise
  /// vector. When shared_mechanisms is set, also enforces entry-by-entry
  /// equality of the Y/H/X tables and noise distributions across sides.
  void validate() const;

  const std::vector<double>& noise_of(const std::string& node) const;

  std::string to_json() const;
  static ScmSpec from_json(const std::string& text);
  static ScmSpec load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Observed lesion state and feature value at the abstract site.
struct Evidence {
  int h_t = 0;  // value of H_T (must be a member of domain_H)
  int z_t = 0;  // observed lesion state, 0 or 1
};

struct DiscreteDistribution {
  std::vector<int> support;
  std::vector<double> mass;

  /// Throws unless masses are nonnegative and sum to 1 within tol.
  void validate(double tol = 1e-9) const;
  double mass_at(int value) const;
};

/// 0.5 * L1 distance between two distributions over merged supports.
double total_variation(const DiscreteDistribution& a, const DiscreteDistribution& b);

/// One complete world: node values plus the sampled noise indices,
/// so consistency can be re-audited against the lookup tables.
struct WorldAssignment {
  int c = 0;  // value from domain_C
  int z_t = 0, z_r = 0;
  int y_t = 0, y_r = 0;
  int h_t = 0, h_r = 0;  // values from domain_H
  int x_t = 0, x_r = 0;  // raw values
  std::map<std::string, int> noise_idx;
};

/// Ancestral sampling; deterministic for a fixed seed.
WorldAssignment sample_world(const ScmSpec& spec, std::uint64_t seed);

/// Exact counterfactual P(H_T{Z_T:=z} = h | H_T = h_t, Z_T = z_t) by
/// abduction-action-prediction: enumerate every (C, noise) world, weight
/// by the posterior given the evidence, force Z_T to the intervention
/// value, and re-evaluate the downstream lookups with the same noise.
/// Throws on zero-probability evidence.
DiscreteDistribution counterfactual_distribution(const ScmSpec& spec, const Evidence& evidence,
                                                 int intervention_z);

/// Exact posterior of the named node given the evidence, by enumeration.
DiscreteDistribution conditional_distribution(const ScmSpec& spec, const Evidence& evidence,
                                              const std::string& node);

/// Marginal probability of the evidence itself.
double evidence_probability(const ScmSpec& spec, const Evidence& evidence);

/// Feature values h with P(H_T = h, Z_T = z) > 0.
std::vector<int> evidence_support(const ScmSpec& spec, int z);

struct TheoremReport {
  double tv_eq2 = 0.0;  // max over lesion evidence of TV(counterfactual, H_R posterior)
  double tv_eq3 = 0.0;  // max over lesion-free evidence of TV(counterfactual, point mass)
  bool pass = false;
};

/// Audits the symmetric prior by enumeration (throws std::domain_error
/// listing a violating world if any positive-probability world has
/// lesions on both sides), then checks both counterfactual identities
/// across every positive-probability evidence value.
TheoremReport verify_theorem1(const ScmSpec& spec, double tolerance);

/// Options for the random compliant-spec generator. Downstream (Y, H)
/// noise is degenerate so that the identities hold exactly under
/// full-noise abduction; randomness lives in C, the lesion states and X.
struct RandomSpecOptions {
  int max_c = 4;
  int max_h = 5;
  int max_noise = 3;
};

/// Random spec satisfying the symmetric prior and shared mechanisms.
ScmSpec random_compliant_spec(Rng& rng, const RandomSpecOptions& opts = {});

/// Copies `spec`, perturbs one reachable R-side H table entry and clears
/// the shared flag: a falsification control for the second identity.
ScmSpec break_shared_h(const ScmSpec& spec, Rng& rng);

}  // namespace cgn::scm
