#include "cgn/scm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cgn::scm {

using nlohmann::json;

int Mechanism::at(std::span<const int> idx) const {
  if (idx.size() != dims.size()) throw std::invalid_argument("mechanism index rank mismatch");
  int flat = 0;
  for (size_t i = 0; i < dims.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= dims[i])
      throw std::out_of_range("mechanism index out of range");
    flat = flat * dims[i] + idx[i];
  }
  return table[static_cast<size_t>(flat)];
}

namespace {

int index_of(const std::vector<int>& domain, int value, const char* what) {
  const auto it = std::find(domain.begin(), domain.end(), value);
  if (it == domain.end())
    throw std::invalid_argument(std::string(what) + ": value " + std::to_string(value) +
                                " not in domain");
  return static_cast<int>(it - domain.begin());
}

void check_noise(const std::string& node, const std::vector<double>& probs) {
  if (probs.empty())
    throw std::invalid_argument("noise table for " + node + " is empty");
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw std::invalid_argument("noise table for " + node + " has negative mass");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("noise table for " + node + " sums to " + std::to_string(sum) +
                                ", not 1");
}

void check_mechanism(const std::string& name, const Mechanism& m,
                     const std::vector<int>& expect_dims, int codomain,  // codomain<0: any int
                     bool codomain_is_index) {
  if (m.dims != expect_dims)
    throw std::invalid_argument("table " + name + " has wrong dimensions");
  size_t n = 1;
  for (int d : m.dims) n *= static_cast<size_t>(d);
  if (m.table.size() != n)
    throw std::invalid_argument("table " + name + " has wrong entry count");
  if (codomain >= 0) {
    for (int v : m.table) {
      const bool ok = codomain_is_index ? (v >= 0 && v < codomain) : (v == 0 || v == 1);
      if (!ok)
        throw std::invalid_argument("table " + name + " entry " + std::to_string(v) +
                                    " outside codomain");
    }
  }
}

/// Iterates the 7 noise variables upstream of X (C, Z_T, Z_R, Y_T, Y_R,
/// H_T, H_R), handing the visitor the implied node values and the joint
/// probability. X is resolved lazily by callers that need it.
struct CoreWorld {
  int c_idx;
  int z_t, z_r, y_t, y_r;
  int h_t_idx, h_r_idx;
  std::array<int, 7> eps;  // noise indices in node order C..H_R
  double prob;
};

template <class Fn>
void for_each_core_world(const ScmSpec& s, Fn&& fn) {
  const auto& nC = s.noise_of("C");
  const auto& nZT = s.noise_of("Z_T");
  const auto& nZR = s.noise_of("Z_R");
  const auto& nYT = s.noise_of("Y_T");
  const auto& nYR = s.noise_of("Y_R");
  const auto& nHT = s.noise_of("H_T");
  const auto& nHR = s.noise_of("H_R");
  CoreWorld w{};
  for (int eC = 0; eC < static_cast<int>(nC.size()); ++eC) {
    if (nC[eC] == 0.0) continue;
    w.c_idx = s.f_C.at(std::array{eC});
    for (int eZT = 0; eZT < static_cast<int>(nZT.size()); ++eZT) {
      if (nZT[eZT] == 0.0) continue;
      w.z_t = s.f_Z_T.at(std::array{w.c_idx, eZT});
      for (int eZR = 0; eZR < static_cast<int>(nZR.size()); ++eZR) {
        if (nZR[eZR] == 0.0) continue;
        w.z_r = s.f_Z_R.at(std::array{w.c_idx, eZR});
        for (int eYT = 0; eYT < static_cast<int>(nYT.size()); ++eYT) {
          if (nYT[eYT] == 0.0) continue;
          w.y_t = s.f_Y_T.at(std::array{w.c_idx, w.z_t, eYT});
          for (int eYR = 0; eYR < static_cast<int>(nYR.size()); ++eYR) {
            if (nYR[eYR] == 0.0) continue;
            w.y_r = s.f_Y_R.at(std::array{w.c_idx, w.z_r, eYR});
            for (int eHT = 0; eHT < static_cast<int>(nHT.size()); ++eHT) {
              if (nHT[eHT] == 0.0) continue;
              w.h_t_idx = s.f_H_T.at(std::array{w.c_idx, w.y_t, eHT});
              for (int eHR = 0; eHR < static_cast<int>(nHR.size()); ++eHR) {
                if (nHR[eHR] == 0.0) continue;
                w.h_r_idx = s.f_H_R.at(std::array{w.c_idx, w.y_r, eHR});
                w.eps = {eC, eZT, eZR, eYT, eYR, eHT, eHR};
                w.prob = nC[eC] * nZT[eZT] * nZR[eZR] * nYT[eYT] * nYR[eYR] * nHT[eHT] * nHR[eHR];
                fn(w);
              }
            }
          }
        }
      }
    }
  }
}

bool matches_evidence(const ScmSpec& s, const CoreWorld& w, const Evidence& ev) {
  return s.domain_H[static_cast<size_t>(w.h_t_idx)] == ev.h_t && w.z_t == ev.z_t;
}

void check_evidence(const ScmSpec& s, const Evidence& ev) {
  index_of(s.domain_H, ev.h_t, "evidence h_t");
  if (ev.z_t != 0 && ev.z_t != 1)
    throw std::invalid_argument("evidence z_t must be 0 or 1");
}

DiscreteDistribution normalize_over_domain(const std::vector<int>& domain,
                                           std::vector<double> mass, double total) {
  if (total <= 0.0)
    throw std::runtime_error("impossible evidence: conditioning event has probability 0");
  for (double& m : mass) m /= total;
  return DiscreteDistribution{domain, std::move(mass)};
}

}  // namespace

const std::vector<double>& ScmSpec::noise_of(const std::string& node) const {
  const auto it = noise.find(node);
  if (it == noise.end())
    throw std::invalid_argument("missing noise table for node " + node);
  return it->second;
}

void ScmSpec::validate() const {
  if (domain_C.empty()) throw std::invalid_argument("domain_C is empty");
  if (domain_H.empty()) throw std::invalid_argument("domain_H is empty");
  for (const char* node : kNodes) check_noise(node, noise_of(node));

  const int nc = static_cast<int>(domain_C.size());
  const int nh = static_cast<int>(domain_H.size());
  const auto ns = [this](const char* node) {
    return static_cast<int>(noise_of(node).size());
  };
  check_mechanism("f_C", f_C, {ns("C")}, nc, true);
  check_mechanism("f_Z_T", f_Z_T, {nc, ns("Z_T")}, 2, false);
  check_mechanism("f_Z_R", f_Z_R, {nc, ns("Z_R")}, 2, false);
  check_mechanism("f_Y_T", f_Y_T, {nc, 2, ns("Y_T")}, 2, false);
  check_mechanism("f_Y_R", f_Y_R, {nc, 2, ns("Y_R")}, 2, false);
  check_mechanism("f_H_T", f_H_T, {nc, 2, ns("H_T")}, nh, true);
  check_mechanism("f_H_R", f_H_R, {nc, 2, ns("H_R")}, nh, true);
  check_mechanism("f_X_T", f_X_T, {nc, nh, ns("X_T")}, -1, false);
  check_mechanism("f_X_R", f_X_R, {nc, nh, ns("X_R")}, -1, false);

  if (shared_mechanisms) {
    if (!(f_Y_T == f_Y_R)) throw std::invalid_argument("shared_mechanisms set but f_Y tables differ");
    if (!(f_H_T == f_H_R)) throw std::invalid_argument("shared_mechanisms set but f_H tables differ");
    if (!(f_X_T == f_X_R)) throw std::invalid_argument("shared_mechanisms set but f_X tables differ");
    if (noise_of("Y_T") != noise_of("Y_R"))
      throw std::invalid_argument("shared_mechanisms set but Y noise tables differ");
    if (noise_of("H_T") != noise_of("H_R"))
      throw std::invalid_argument("shared_mechanisms set but H noise tables differ");
    if (noise_of("X_T") != noise_of("X_R"))
      throw std::invalid_argument("shared_mechanisms set but X noise tables differ");
  }
}

void DiscreteDistribution::validate(double tol) const {
  if (support.size() != mass.size())
    throw std::invalid_argument("distribution support/mass size mismatch");
  double sum = 0.0;
  for (double m : mass) {
    if (m < 0.0) throw std::invalid_argument("distribution has negative mass");
    sum += m;
  }
  if (std::abs(sum - 1.0) > tol)
    throw std::invalid_argument("distribution mass sums to " + std::to_string(sum));
}

double DiscreteDistribution::mass_at(int value) const {
  for (size_t i = 0; i < support.size(); ++i)
    if (support[i] == value) return mass[i];
  return 0.0;
}

double total_variation(const DiscreteDistribution& a, const DiscreteDistribution& b) {
  std::set<int> values(a.support.begin(), a.support.end());
  values.insert(b.support.begin(), b.support.end());
  double l1 = 0.0;
  for (int v : values) l1 += std::abs(a.mass_at(v) - b.mass_at(v));
  return 0.5 * l1;
}

WorldAssignment sample_world(const ScmSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const auto draw = [&rng](const std::vector<double>& probs) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  };

  WorldAssignment w;
  for (const char* node : kNodes) w.noise_idx[node] = draw(spec.noise_of(node));

  const int c_idx = spec.f_C.at(std::array{w.noise_idx["C"]});
  w.c = spec.domain_C[static_cast<size_t>(c_idx)];
  w.z_t = spec.f_Z_T.at(std::array{c_idx, w.noise_idx["Z_T"]});
  w.z_r = spec.f_Z_R.at(std::array{c_idx, w.noise_idx["Z_R"]});
  w.y_t = spec.f_Y_T.at(std::array{c_idx, w.z_t, w.noise_idx["Y_T"]});
  w.y_r = spec.f_Y_R.at(std::array{c_idx, w.z_r, w.noise_idx["Y_R"]});
  const int ht_idx = spec.f_H_T.at(std::array{c_idx, w.y_t, w.noise_idx["H_T"]});
  const int hr_idx = spec.f_H_R.at(std::array{c_idx, w.y_r, w.noise_idx["H_R"]});
  w.h_t = spec.domain_H[static_cast<size_t>(ht_idx)];
  w.h_r = spec.domain_H[static_cast<size_t>(hr_idx)];
  w.x_t = spec.f_X_T.at(std::array{c_idx, ht_idx, w.noise_idx["X_T"]});
  w.x_r = spec.f_X_R.at(std::array{c_idx, hr_idx, w.noise_idx["X_R"]});
  return w;
}

DiscreteDistribution counterfactual_distribution(const ScmSpec& spec, const Evidence& evidence,
                                                 int intervention_z) {
  spec.validate();
  check_evidence(spec, evidence);
  if (intervention_z != 0 && intervention_z != 1)
    throw std::invalid_argument("intervention_z must be 0 or 1");

  std::vector<double> mass(spec.domain_H.size(), 0.0);
  double total = 0.0;
  for_each_core_world(spec, [&](const CoreWorld& w) {
    if (!matches_evidence(spec, w, evidence)) return;
    total += w.prob;
    // Action + prediction: force Z_T, re-evaluate Y_T and H_T with the
    // world's own noise draws.
    const int y = spec.f_Y_T.at(std::array{w.c_idx, intervention_z, w.eps[3]});
    const int h = spec.f_H_T.at(std::array{w.c_idx, y, w.eps[5]});
    mass[static_cast<size_t>(h)] += w.prob;
  });
  return normalize_over_domain(spec.domain_H, std::move(mass), total);
}

DiscreteDistribution conditional_distribution(const ScmSpec& spec, const Evidence& evidence,
                                              const std::string& node) {
  spec.validate();
  check_evidence(spec, evidence);
  const auto node_it = std::find_if(kNodes.begin(), kNodes.end(),
                                    [&node](const char* n) { return node == n; });
  if (node_it == kNodes.end()) throw std::out_of_range("unknown node name: " + node);

  const bool is_x = node == "X_T" || node == "X_R";
  // Support: domain values for finite-domain nodes, table codomain for X.
  std::vector<int> support;
  if (node == "C") support = spec.domain_C;
  else if (node == "H_T" || node == "H_R") support = spec.domain_H;
  else if (is_x) {
    const auto& tbl = (node == "X_T" ? spec.f_X_T : spec.f_X_R).table;
    std::set<int> uniq(tbl.begin(), tbl.end());
    support.assign(uniq.begin(), uniq.end());
  } else {
    support = {0, 1};
  }
  const auto support_index = [&support](int value) {
    return static_cast<size_t>(
        std::find(support.begin(), support.end(), value) - support.begin());
  };

  std::vector<double> mass(support.size(), 0.0);
  double total = 0.0;
  const auto& x_noise = spec.noise_of(node == "X_R" ? "X_R" : "X_T");
  for_each_core_world(spec, [&](const CoreWorld& w) {
    if (!matches_evidence(spec, w, evidence)) return;
    total += w.prob;
    int value = 0;
    if (node == "C") value = spec.domain_C[static_cast<size_t>(w.c_idx)];
    else if (node == "Z_T") value = w.z_t;
    else if (node == "Z_R") value = w.z_r;
    else if (node == "Y_T") value = w.y_t;
    else if (node == "Y_R") value = w.y_r;
    else if (node == "H_T") value = spec.domain_H[static_cast<size_t>(w.h_t_idx)];
    else if (node == "H_R") value = spec.domain_H[static_cast<size_t>(w.h_r_idx)];
    else {
      // Extend the world over the queried side's X noise.
      const auto& fx = node == "X_T" ? spec.f_X_T : spec.f_X_R;
      const int h_idx = node == "X_T" ? w.h_t_idx : w.h_r_idx;
      for (int e = 0; e < static_cast<int>(x_noise.size()); ++e) {
        if (x_noise[e] == 0.0) continue;
        const int xv = fx.at(std::array{w.c_idx, h_idx, e});
        mass[support_index(xv)] += w.prob * x_noise[e];
      }
      return;
    }
    mass[support_index(value)] += w.prob;
  });
  return normalize_over_domain(support, std::move(mass), total);
}

double evidence_probability(const ScmSpec& spec, const Evidence& evidence) {
  spec.validate();
  check_evidence(spec, evidence);
  double total = 0.0;
  for_each_core_world(spec, [&](const CoreWorld& w) {
    if (matches_evidence(spec, w, evidence)) total += w.prob;
  });
  return total;
}

std::vector<int> evidence_support(const ScmSpec& spec, int z) {
  spec.validate();
  std::vector<double> mass(spec.domain_H.size(), 0.0);
  for_each_core_world(spec, [&](const CoreWorld& w) {
    if (w.z_t == z) mass[static_cast<size_t>(w.h_t_idx)] += w.prob;
  });
  std::vector<int> out;
  for (size_t i = 0; i < mass.size(); ++i)
    if (mass[i] > 0.0) out.push_back(spec.domain_H[i]);
  return out;
}

TheoremReport verify_theorem1(const ScmSpec& spec, double tolerance) {
  spec.validate();

  // Symmetric-prior audit: no positive-probability world may carry a
  // lesion on both sides.
  bool violated = false;
  CoreWorld bad{};
  for_each_core_world(spec, [&](const CoreWorld& w) {
    if (!violated && w.z_t == 1 && w.z_r == 1 && w.prob > 0.0) {
      violated = true;
      bad = w;
    }
  });
  if (violated) {
    std::ostringstream os;
    os << "symmetric prior violated: world with C=" << spec.domain_C[static_cast<size_t>(bad.c_idx)]
       << ", Z_T=1, Z_R=1 has probability " << bad.prob;
    throw std::domain_error(os.str());
  }

  TheoremReport report;
  for (int h : evidence_support(spec, 1)) {
    const Evidence ev{h, 1};
    const auto cf = counterfactual_distribution(spec, ev, 0);
    const auto hr = conditional_distribution(spec, ev, "H_R");
    report.tv_eq2 = std::max(report.tv_eq2, total_variation(cf, hr));
  }
  for (int h : evidence_support(spec, 0)) {
    const Evidence ev{h, 0};
    const auto cf = counterfactual_distribution(spec, ev, 0);
    DiscreteDistribution point{{h}, {1.0}};
    report.tv_eq3 = std::max(report.tv_eq3, total_variation(cf, point));
  }
  report.pass = report.tv_eq2 <= tolerance && report.tv_eq3 <= tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json mech_to_json(const Mechanism& m) {
  // Emit as nested arrays following dims.
  std::function<json(size_t, size_t&)> build = [&](size_t axis, size_t& pos) -> json {
    json arr = json::array();
    if (axis + 1 == m.dims.size()) {
      for (int i = 0; i < m.dims[axis]; ++i) arr.push_back(m.table[pos++]);
    } else {
      for (int i = 0; i < m.dims[axis]; ++i) arr.push_back(build(axis + 1, pos));
    }
    return arr;
  };
  size_t pos = 0;
  return build(0, pos);
}

void flatten_json_table(const json& j, std::vector<int>& dims, std::vector<int>& out,
                        size_t depth, const std::string& name) {
  if (j.is_array()) {
    if (depth == dims.size()) dims.push_back(static_cast<int>(j.size()));
    else if (dims[depth] != static_cast<int>(j.size()))
      throw std::invalid_argument("table " + name + " is ragged");
    for (const auto& e : j) flatten_json_table(e, dims, out, depth + 1, name);
  } else if (j.is_number_integer()) {
    if (depth != dims.size())
      throw std::invalid_argument("table " + name + " has uneven nesting");
    out.push_back(j.get<int>());
  } else {
    throw std::invalid_argument("table " + name + " has a non-integer entry");
  }
}

Mechanism mech_from_json(const json& j, const std::string& name) {
  Mechanism m;
  flatten_json_table(j, m.dims, m.table, 0, name);
  if (m.dims.empty()) throw std::invalid_argument("table " + name + " is empty");
  return m;
}

/// Domain-valued tables are stored with values in JSON but indices
/// internally; translate on the boundary.
Mechanism map_codomain_to_index(Mechanism m, const std::vector<int>& domain,
                                const std::string& name) {
  for (int& v : m.table) v = index_of(domain, v, name.c_str());
  return m;
}

Mechanism map_codomain_to_value(Mechanism m, const std::vector<int>& domain) {
  for (int& v : m.table) v = domain[static_cast<size_t>(v)];
  return m;
}

}  // namespace

std::string ScmSpec::to_json() const {
  json j;
  j["domain_C"] = domain_C;
  j["domain_H"] = domain_H;
  j["shared_mechanisms"] = shared_mechanisms;
  j["noise"] = noise;
  j["f_C"] = mech_to_json(map_codomain_to_value(f_C, domain_C));
  j["f_Z_T"] = mech_to_json(f_Z_T);
  j["f_Z_R"] = mech_to_json(f_Z_R);
  j["f_Y_T"] = mech_to_json(f_Y_T);
  j["f_Y_R"] = mech_to_json(f_Y_R);
  j["f_H_T"] = mech_to_json(map_codomain_to_value(f_H_T, domain_H));
  j["f_H_R"] = mech_to_json(map_codomain_to_value(f_H_R, domain_H));
  j["f_X_T"] = mech_to_json(f_X_T);
  j["f_X_R"] = mech_to_json(f_X_R);
  return j.dump(2);
}

ScmSpec ScmSpec::from_json(const std::string& text) {
  const json j = json::parse(text);
  ScmSpec s;
  s.domain_C = j.at("domain_C").get<std::vector<int>>();
  s.domain_H = j.at("domain_H").get<std::vector<int>>();
  s.shared_mechanisms = j.value("shared_mechanisms", false);
  s.noise = j.at("noise").get<std::map<std::string, std::vector<double>>>();
  s.f_C = map_codomain_to_index(mech_from_json(j.at("f_C"), "f_C"), s.domain_C, "f_C");
  s.f_Z_T = mech_from_json(j.at("f_Z_T"), "f_Z_T");
  s.f_Z_R = mech_from_json(j.at("f_Z_R"), "f_Z_R");
  s.f_Y_T = mech_from_json(j.at("f_Y_T"), "f_Y_T");
  s.f_Y_R = mech_from_json(j.at("f_Y_R"), "f_Y_R");
  s.f_H_T = map_codomain_to_index(mech_from_json(j.at("f_H_T"), "f_H_T"), s.domain_H, "f_H_T");
  s.f_H_R = map_codomain_to_index(mech_from_json(j.at("f_H_R"), "f_H_R"), s.domain_H, "f_H_R");
  s.f_X_T = mech_from_json(j.at("f_X_T"), "f_X_T");
  s.f_X_R = mech_from_json(j.at("f_X_R"), "f_X_R");
  s.validate();
  return s;
}

ScmSpec ScmSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scm spec: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void ScmSpec::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open scm spec for writing: " + path.string());
  out << to_json() << '\n';
}

// ---------------------------------------------------------------------------
// Random fixtures

namespace {

std::vector<double> random_probs(Rng& rng, int n) {
  std::vector<double> p(static_cast<size_t>(n));
  double sum = 0.0;
  for (auto& v : p) {
    v = rng.uniform(0.2, 1.0);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  // Re-normalize exactly: force the largest entry to absorb rounding.
  const double drift = std::accumulate(p.begin(), p.end(), 0.0) - 1.0;
  *std::max_element(p.begin(), p.end()) -= drift;
  return p;
}

}  // namespace

ScmSpec random_compliant_spec(Rng& rng, const RandomSpecOptions& opts) {
  ScmSpec s;
  const int nc = 2 + rng.uniform_int(opts.max_c - 1);
  const int nh = 2 + rng.uniform_int(opts.max_h - 1);
  for (int i = 0; i < nc; ++i) s.domain_C.push_back(i);
  for (int i = 0; i < nh; ++i) s.domain_H.push_back(10 + i);

  const int n_eps_c = nc;  // identity assignment keeps every c reachable
  const int n_eps_z = 2 + rng.uniform_int(opts.max_noise - 1);
  const int n_eps_x = 1 + rng.uniform_int(opts.max_noise);

  s.noise["C"] = random_probs(rng, n_eps_c);
  s.noise["Z_T"] = random_probs(rng, n_eps_z);
  s.noise["Z_R"] = random_probs(rng, n_eps_z);
  // Downstream mechanisms are deterministic (point-mass noise): the
  // counterfactual identities require the post-lesion chain to be a
  // function of (C, Z) alone.
  s.noise["Y_T"] = {1.0};
  s.noise["Y_R"] = {1.0};
  s.noise["H_T"] = {1.0};
  s.noise["H_R"] = {1.0};
  s.noise["X_T"] = random_probs(rng, n_eps_x);
  s.noise["X_R"] = s.noise["X_T"];

  s.f_C.dims = {n_eps_c};
  for (int i = 0; i < n_eps_c; ++i) s.f_C.table.push_back(i);

  // Split contexts into lesion-capable-on-T, lesion-capable-on-R, and
  // lesion-free; a side that can carry a lesion for some context forces
  // the other side to zero there (the symmetric prior by construction).
  s.f_Z_T.dims = {nc, n_eps_z};
  s.f_Z_R.dims = {nc, n_eps_z};
  s.f_Z_T.table.assign(static_cast<size_t>(nc) * n_eps_z, 0);
  s.f_Z_R.table.assign(static_cast<size_t>(nc) * n_eps_z, 0);
  bool has_t_lesion_context = false;
  for (int c = 0; c < nc; ++c) {
    const int kind = c == 0 ? 0 : rng.uniform_int(3);  // ensure at least one T-lesion context
    if (kind == 0) {
      has_t_lesion_context = true;
      bool any = false;
      for (int e = 0; e < n_eps_z; ++e) {
        const int v = rng.bernoulli(0.6) ? 1 : 0;
        s.f_Z_T.table[static_cast<size_t>(c) * n_eps_z + e] = v;
        any = any || v == 1;
      }
      if (!any) s.f_Z_T.table[static_cast<size_t>(c) * n_eps_z] = 1;
    } else if (kind == 1) {
      for (int e = 0; e < n_eps_z; ++e)
        s.f_Z_R.table[static_cast<size_t>(c) * n_eps_z + e] = rng.bernoulli(0.5) ? 1 : 0;
    }
  }
  (void)has_t_lesion_context;

  s.f_Y_T.dims = {nc, 2, 1};
  for (int c = 0; c < nc; ++c)
    for (int z = 0; z < 2; ++z)
      s.f_Y_T.table.push_back(z == 1 ? (rng.bernoulli(0.8) ? 1 : 0) : (rng.bernoulli(0.2) ? 1 : 0));
  s.f_Y_R = s.f_Y_T;

  s.f_H_T.dims = {nc, 2, 1};
  for (int c = 0; c < nc; ++c)
    for (int y = 0; y < 2; ++y) s.f_H_T.table.push_back(rng.uniform_int(nh));
  s.f_H_R = s.f_H_T;

  s.f_X_T.dims = {nc, nh, n_eps_x};
  for (int i = 0; i < nc * nh * n_eps_x; ++i) s.f_X_T.table.push_back(rng.uniform_int(100));
  s.f_X_R = s.f_X_T;

  s.shared_mechanisms = true;
  s.validate();
  return s;
}

ScmSpec break_shared_h(const ScmSpec& spec, Rng& rng) {
  ScmSpec out = spec;
  out.shared_mechanisms = false;
  const int nh = static_cast<int>(spec.domain_H.size());

  // Perturb the R-side H entry that drives Eq. (2): pick a context that
  // can carry a target lesion, and rewrite H_R at (c, y = f_Y(c, 0)).
  std::vector<int> lesion_contexts;
  const int n_eps_z = spec.f_Z_T.dims[1];
  for (int c = 0; c < spec.f_Z_T.dims[0]; ++c)
    for (int e = 0; e < n_eps_z; ++e)
      if (spec.f_Z_T.table[static_cast<size_t>(c) * n_eps_z + e] == 1) {
        lesion_contexts.push_back(c);
        break;
      }
  if (lesion_contexts.empty())
    throw std::invalid_argument("break_shared_h: spec has no lesion-capable context");
  const int c = lesion_contexts[static_cast<size_t>(rng.uniform_int(
      static_cast<int>(lesion_contexts.size())))];
  const int y0 = spec.f_Y_R.at(std::array{c, 0, 0});
  const int n_eps_h = out.f_H_R.dims[2];
  for (int e = 0; e < n_eps_h; ++e) {
    const size_t idx = (static_cast<size_t>(c) * 2 + static_cast<size_t>(y0)) * n_eps_h + e;
    out.f_H_R.table[idx] = (out.f_H_R.table[idx] + 1 + rng.uniform_int(nh - 1)) % nh;
  }
  return out;
}

}  // namespace cgn::scm
