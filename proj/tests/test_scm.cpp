#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cgn/rng.hpp"
#include "cgn/scm.hpp"

using namespace cgn;
using namespace cgn::scm;

namespace {

/// Two contexts, binary H; deterministic everything except C and Z_T.
/// Hand-auditable: f_Y(c,z) = z, f_H(c,y) = y on both sides.
ScmSpec tiny_symmetric_spec() {
  ScmSpec s;
  s.domain_C = {0, 1};
  s.domain_H = {0, 1};
  s.noise = {
      {"C", {0.6, 0.4}},   {"Z_T", {0.5, 0.5}}, {"Z_R", {1.0}},
      {"Y_T", {1.0}},      {"Y_R", {1.0}},      {"H_T", {1.0}},
      {"H_R", {1.0}},      {"X_T", {1.0}},      {"X_R", {1.0}},
  };
  s.f_C = {{2}, {0, 1}};
  // Context 0 can carry a target lesion (eps-dependent); context 1 cannot.
  s.f_Z_T = {{2, 2}, {0, 1, 0, 0}};
  s.f_Z_R = {{2, 1}, {0, 0}};
  s.f_Y_T = {{2, 2, 1}, {0, 1, 0, 1}};
  s.f_Y_R = s.f_Y_T;
  s.f_H_T = {{2, 2, 1}, {0, 1, 0, 1}};
  s.f_H_R = s.f_H_T;
  s.f_X_T = {{2, 2, 1}, {10, 11, 12, 13}};
  s.f_X_R = s.f_X_T;
  s.shared_mechanisms = true;
  return s;
}

/// All noise tables are point masses; one consistent world.
ScmSpec deterministic_spec() {
  ScmSpec s = tiny_symmetric_spec();
  s.noise["C"] = {1.0};
  s.noise["Z_T"] = {1.0};
  s.f_C = {{1}, {1}};
  s.f_Z_T = {{2, 1}, {0, 0}};
  return s;
}

}  // namespace

TEST_CASE("validation rejects bad noise and tables") {
  ScmSpec s = tiny_symmetric_spec();
  s.noise["Z_T"] = {0.5, 0.6};
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("Z_T"), std::invalid_argument);

  s = tiny_symmetric_spec();
  s.f_H_T.table[0] = 7;  // outside domain_H index range
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("f_H_T"), std::invalid_argument);

  s = tiny_symmetric_spec();
  s.f_H_R.table[1] = 0;  // breaks shared equality while flag set
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("sample_world: deterministic spec yields the unique assignment") {
  const ScmSpec s = deterministic_spec();
  for (std::uint64_t seed : {1ull, 42ull, 999ull}) {
    const auto w = sample_world(s, seed);
    CHECK(w.c == 1);
    CHECK(w.z_t == 0);
    CHECK(w.z_r == 0);
    CHECK(w.y_t == 0);
    CHECK(w.h_t == 0);
    CHECK(w.x_t == 12);
  }
}

TEST_CASE("sample_world: assignments satisfy the structural equations") {
  Rng rng(7);
  const ScmSpec s = random_compliant_spec(rng);
  for (std::uint64_t seed : {3ull, 17ull}) {
    auto w = sample_world(s, seed);
    const int c_idx = static_cast<int>(
        std::find(s.domain_C.begin(), s.domain_C.end(), w.c) - s.domain_C.begin());
    CHECK(w.z_t == s.f_Z_T.at(std::array{c_idx, w.noise_idx["Z_T"]}));
    CHECK(w.z_r == s.f_Z_R.at(std::array{c_idx, w.noise_idx["Z_R"]}));
    CHECK(w.y_t == s.f_Y_T.at(std::array{c_idx, w.z_t, w.noise_idx["Y_T"]}));
    const int ht_idx = s.f_H_T.at(std::array{c_idx, w.y_t, w.noise_idx["H_T"]});
    CHECK(w.h_t == s.domain_H[static_cast<size_t>(ht_idx)]);
    CHECK(w.x_t == s.f_X_T.at(std::array{c_idx, ht_idx, w.noise_idx["X_T"]}));
  }
}

TEST_CASE("sample_world: identical seeds give identical assignments") {
  Rng rng(11);
  const ScmSpec s = random_compliant_spec(rng);
  const auto a = sample_world(s, 123);
  const auto b = sample_world(s, 123);
  CHECK(a.c == b.c);
  CHECK(a.h_t == b.h_t);
  CHECK(a.h_r == b.h_r);
  CHECK(a.x_r == b.x_r);
  CHECK(a.noise_idx == b.noise_idx);
}

TEST_CASE("counterfactual under the factual condition is the factual point mass") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const ScmSpec s = random_compliant_spec(rng);
    for (int z : {0, 1}) {
      for (int h : evidence_support(s, z)) {
        const auto d = counterfactual_distribution(s, Evidence{h, z}, z);
        d.validate();
        CHECK(d.mass_at(h) == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("counterfactual equals the reference posterior (hand-built spec)") {
  const ScmSpec s = tiny_symmetric_spec();
  // Evidence: lesion observed with H_T = 1 (only context 0, eps_Z=1 fits).
  const Evidence ev{1, 1};
  const auto cf = counterfactual_distribution(s, ev, 0);
  const auto hr = conditional_distribution(s, ev, "H_R");
  CHECK(total_variation(cf, hr) <= 1e-12);
  // Under intervention Z:=0, context 0 gives Y=0, H=0.
  CHECK(cf.mass_at(0) == doctest::Approx(1.0));
}

TEST_CASE("conditional_distribution matches a hand Bayes table") {
  const ScmSpec s = tiny_symmetric_spec();
  // P(C | H_T = 0, Z_T = 0): context 0 contributes 0.6*0.5 (eps_Z=0),
  // context 1 contributes 0.4*1.0; H_T = 0 holds in both (z=0 -> y=0 -> h=0).
  const auto post = conditional_distribution(s, Evidence{0, 0}, "C");
  const double w0 = 0.6 * 0.5, w1 = 0.4;
  CHECK(post.mass_at(0) == doctest::Approx(w0 / (w0 + w1)).epsilon(1e-12));
  CHECK(post.mass_at(1) == doctest::Approx(w1 / (w0 + w1)).epsilon(1e-12));
}

TEST_CASE("conditional_distribution: evidence with probability 1 gives the marginal") {
  ScmSpec s = deterministic_spec();
  s.noise["X_T"] = {0.25, 0.75};
  s.f_X_T = {{2, 2, 2}, {10, 20, 11, 21, 12, 22, 13, 23}};
  s.f_X_R = s.f_X_T;
  s.noise["X_R"] = s.noise["X_T"];
  const auto d = conditional_distribution(s, Evidence{0, 0}, "X_T");
  d.validate();
  CHECK(d.mass_at(12) == doctest::Approx(0.25));
  CHECK(d.mass_at(22) == doctest::Approx(0.75));
}

TEST_CASE("conditional_distribution: querying the evidence node returns its point mass") {
  const ScmSpec s = tiny_symmetric_spec();
  const auto d = conditional_distribution(s, Evidence{1, 1}, "H_T");
  CHECK(d.mass_at(1) == doctest::Approx(1.0));
}

TEST_CASE("unknown node name and impossible evidence raise") {
  const ScmSpec s = tiny_symmetric_spec();
  CHECK_THROWS_AS(conditional_distribution(s, Evidence{0, 0}, "H_Q"), std::out_of_range);
  // Context 1 never produces Z_T=1 with H_T=0... evidence (h=0, z=1) is
  // impossible: lesion implies Y=1 implies H=1.
  CHECK_THROWS_WITH_AS(counterfactual_distribution(s, Evidence{0, 1}, 0),
                       doctest::Contains("impossible evidence"), std::runtime_error);
}

TEST_CASE("verify_theorem1 passes on compliant specs with tv_eq3 exactly zero") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const ScmSpec s = random_compliant_spec(rng);
    const auto report = verify_theorem1(s, 1e-9);
    CHECK(report.pass);
    CHECK(report.tv_eq2 <= 1e-9);
    CHECK(report.tv_eq3 == 0.0);
  }
}

TEST_CASE("verify_theorem1 rejects symmetric-prior violations naming a world") {
  ScmSpec s = tiny_symmetric_spec();
  s.f_Z_R = {{2, 1}, {1, 0}};  // context 0 now lesions both sides
  CHECK_THROWS_WITH_AS(verify_theorem1(s, 1e-9), doctest::Contains("symmetric prior"),
                       std::domain_error);
}

TEST_CASE("breaking the shared H mechanism breaks the counterfactual identity") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const ScmSpec s = random_compliant_spec(rng);
    const ScmSpec broken = break_shared_h(s, rng);
    const auto report = verify_theorem1(broken, 1e-9);
    CHECK_FALSE(report.pass);
    CHECK(report.tv_eq2 > 1e-3);
  }
}

TEST_CASE("every returned distribution conserves probability") {
  Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const ScmSpec s = random_compliant_spec(rng);
    for (int z : {0, 1})
      for (int h : evidence_support(s, z)) {
        counterfactual_distribution(s, Evidence{h, z}, 0).validate(1e-9);
        counterfactual_distribution(s, Evidence{h, z}, 1).validate(1e-9);
        for (const char* node : kNodes)
          conditional_distribution(s, Evidence{h, z}, node).validate(1e-9);
      }
  }
}

TEST_CASE("json round trip preserves the spec") {
  Rng rng(53);
  const ScmSpec s = random_compliant_spec(rng);
  const ScmSpec back = ScmSpec::from_json(s.to_json());
  CHECK(back.domain_C == s.domain_C);
  CHECK(back.domain_H == s.domain_H);
  CHECK(back.noise == s.noise);
  CHECK(back.f_Z_T == s.f_Z_T);
  CHECK(back.f_H_R == s.f_H_R);
  CHECK(back.f_X_T == s.f_X_T);
  CHECK(back.shared_mechanisms == s.shared_mechanisms);
  const auto a = verify_theorem1(s, 1e-9);
  const auto b = verify_theorem1(back, 1e-9);
  CHECK(a.tv_eq2 == b.tv_eq2);
  CHECK(a.pass == b.pass);
}
