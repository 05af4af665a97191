#include "hbaf/fusion.hpp"
#include "hbaf/layers.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <stdexcept>

using namespace hbaf;

namespace {

struct FusionCase {
  ModelConfig cfg;
  ParameterStore store;
  Matrix h_audio, h_text;
};

FusionCase make_case(int n, int width, std::uint64_t seed, Ablations ab = {}) {
  FusionCase c;
  c.cfg = ModelConfig::reduced(width, 3, 3, 4);
  c.cfg.ablations = ab;
  Rng rng(seed);
  fusion::register_params(c.store, c.cfg, rng);
  for (Parameter& p : c.store.all()) {
    if (p.name.ends_with(".b")) {
      for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-0.5, 0.5);
    }
  }
  c.h_audio.resize(n, width);
  c.h_text.resize(n, width);
  for (Index i = 0; i < c.h_audio.size(); ++i) c.h_audio.data()[i] = rng.normal();
  for (Index i = 0; i < c.h_text.size(); ++i) c.h_text.data()[i] = rng.normal();
  return c;
}

oracle::Mat p(const FusionCase& c, const std::string& name) {
  return testutil::to_mat(c.store.at(name).value);
}

}  // namespace

TEST_SUITE_BEGIN("fusion");

TEST_CASE("self and cross attention match the scalar oracle") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    FusionCase c = make_case(1 + static_cast<int>(seed % 6), 4, seed);
    Graph g(c.store);
    fusion::FusionState s = fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    const oracle::Mat ha = testutil::to_mat(c.h_audio);
    const oracle::Mat hl = testutil::to_mat(c.h_text);
    using oracle::matmul;
    const oracle::Mat qa = matmul(ha, p(c, "fus.attn.a.q")), ka = matmul(ha, p(c, "fus.attn.a.k")),
                      va = matmul(ha, p(c, "fus.attn.a.v"));
    const oracle::Mat ql = matmul(hl, p(c, "fus.attn.l.q")), kl = matmul(hl, p(c, "fus.attn.l.k")),
                      vl = matmul(hl, p(c, "fus.attn.l.v"));
    CHECK(testutil::max_diff(s.self_a.value(), oracle::attention(qa, ka, va)) <= 1e-12);
    CHECK(testutil::max_diff(s.self_l.value(), oracle::attention(ql, kl, vl)) <= 1e-12);
    // Audio queries read text keys and values, and the reverse.
    CHECK(testutil::max_diff(s.cross_a.value(), oracle::attention(qa, kl, vl)) <= 1e-12);
    CHECK(testutil::max_diff(s.cross_l.value(), oracle::attention(ql, ka, va)) <= 1e-12);
  }
}

TEST_CASE("gate and residual stages match the scalar oracle") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    FusionCase c = make_case(4, 4, seed);
    Graph g(c.store);
    fusion::FusionState s = fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    const oracle::Mat self = testutil::to_mat(s.self_a.value());
    const oracle::Mat cross = testutil::to_mat(s.cross_a.value());
    const oracle::Mat a = oracle::matmul(self, p(c, "fus.gate.w_sa"));
    const oracle::Mat b = oracle::matmul(cross, p(c, "fus.gate.w_ca"));
    const oracle::Vec bias = testutil::row_vec(c.store.at("fus.gate.b_a").value);
    oracle::Mat gate = a, star = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a[0].size(); ++j) {
        gate[i][j] = oracle::sigmoid(a[i][j] + b[i][j] + bias[j]);
        star[i][j] = gate[i][j] * self[i][j] + (1.0 - gate[i][j]) * cross[i][j];
      }
    }
    CHECK(testutil::max_diff(s.gate_a.value(), gate) <= 1e-12);
    CHECK(testutil::max_diff(s.star_a.value(), star) <= 1e-12);

    // Residual: LN(P(concat(H, star))) then add&norm with a ReLU feed-forward.
    const oracle::Mat ha = testutil::to_mat(c.h_audio);
    auto affine_ln = [&](const oracle::Vec& x, const std::string& ln) {
      const oracle::Vec n = oracle::layer_norm(x, layers::kLayerNormEps);
      const oracle::Vec gm = testutil::row_vec(c.store.at(ln + ".g").value);
      const oracle::Vec bt = testutil::row_vec(c.store.at(ln + ".b").value);
      oracle::Vec out(n.size());
      for (std::size_t j = 0; j < n.size(); ++j) out[j] = n[j] * gm[j] + bt[j];
      return out;
    };
    auto lin = [&](const oracle::Vec& x, const std::string& prefix, bool relu) {
      const oracle::Mat w = p(c, prefix + ".w");
      const oracle::Vec bb = testutil::row_vec(c.store.at(prefix + ".b").value);
      oracle::Vec out(bb);
      for (std::size_t j = 0; j < out.size(); ++j) {
        for (std::size_t k = 0; k < x.size(); ++k) out[j] += x[k] * w[k][j];
        if (relu) out[j] = std::max(0.0, out[j]);
      }
      return out;
    };
    oracle::Mat want;
    for (std::size_t i = 0; i < ha.size(); ++i) {
      oracle::Vec joined = ha[i];
      joined.insert(joined.end(), star[i].begin(), star[i].end());
      const oracle::Vec h_ln = affine_ln(lin(joined, "fus.res.a.proj", false), "fus.res.a.ln1");
      const oracle::Vec ff = lin(lin(h_ln, "fus.res.a.ff1", true), "fus.res.a.ff2", false);
      oracle::Vec sum(h_ln.size());
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] = h_ln[j] + ff[j];
      want.push_back(affine_ln(sum, "fus.res.a.ln2"));
    }
    CHECK(testutil::max_diff(s.h_a.value(), want) <= 1e-12);
    CHECK(s.h_m.value().leftCols(4) == s.h_a.value());
    CHECK(s.h_m.value().rightCols(4) == s.h_l.value());
  }
}

TEST_CASE("gated features lie coordinatewise between self and cross features") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    FusionCase c = make_case(5, 8, seed);
    Graph g(c.store);
    fusion::FusionState s = fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    for (auto [gate, self, cross, star] :
         {std::tuple{s.gate_a, s.self_a, s.cross_a, s.star_a},
          std::tuple{s.gate_l, s.self_l, s.cross_l, s.star_l}}) {
      const Matrix& gv = gate.value();
      CHECK(gv.minCoeff() > 0.0);
      CHECK(gv.maxCoeff() < 1.0);
      const Matrix lo = self.value().cwiseMin(cross.value());
      const Matrix hi = self.value().cwiseMax(cross.value());
      CHECK(((star.value() - lo).array() >= -1e-15).all());
      CHECK(((hi - star.value()).array() >= -1e-15).all());
    }
  }
}

TEST_CASE("saturated gates select self or cross features") {
  for (double pre : {30.0, -30.0}) {
    FusionCase c = make_case(4, 4, 6);
    for (const char* w : {"fus.gate.w_sa", "fus.gate.w_ca", "fus.gate.w_sl", "fus.gate.w_cl"}) {
      c.store.at(w).value.setZero();
    }
    c.store.at("fus.gate.b_a").value.setConstant(pre);
    c.store.at("fus.gate.b_l").value.setConstant(pre);
    Graph g(c.store);
    fusion::FusionState s = fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    const Matrix& want_a = pre > 0 ? s.self_a.value() : s.cross_a.value();
    const Matrix& want_l = pre > 0 ? s.self_l.value() : s.cross_l.value();
    CHECK((s.star_a.value() - want_a).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((s.star_l.value() - want_l).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("attention rows are probability vectors") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    FusionCase c = make_case(6, 4, seed);
    std::vector<Matrix> log;
    Graph g(c.store);
    g.attention_log = &log;
    fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    CHECK(log.size() == 4);
    for (const Matrix& m : log) {
      CHECK(m.minCoeff() >= 0.0);
      CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("ablated fusion paths") {
  SUBCASE("no_gate averages self and cross features") {
    Ablations ab;
    ab.no_gate = true;
    FusionCase c = make_case(4, 4, 1, ab);
    CHECK(c.store.find("fus.gate.w_sa") == nullptr);
    Graph g(c.store);
    fusion::FusionState s = fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    CHECK_FALSE(s.gate_a.valid());
    const Matrix want = 0.5 * (s.self_a.value() + s.cross_a.value());
    CHECK((s.star_a.value() - want).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("no_residual passes the gated features through") {
    Ablations ab;
    ab.no_residual = true;
    FusionCase c = make_case(4, 4, 2, ab);
    Graph g(c.store);
    fusion::FusionState s = fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    CHECK(s.h_a.value() == s.star_a.value());
    CHECK(s.h_l.value() == s.star_l.value());
  }
  SUBCASE("no_fusion concatenates the context representations") {
    Ablations ab;
    ab.no_fusion = true;
    FusionCase c = make_case(4, 4, 3, ab);
    CHECK(c.store.size() == 0);
    Graph g(c.store);
    fusion::FusionState s = fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    CHECK(s.h_m.value().leftCols(4) == c.h_audio);
    CHECK(s.h_m.value().rightCols(4) == c.h_text);
  }
  SUBCASE("no_attention feeds value sources to the gate") {
    Ablations ab;
    ab.no_attention = true;
    FusionCase c = make_case(4, 4, 4, ab);
    CHECK(c.store.find("fus.attn.a.q") == nullptr);
    Graph g(c.store);
    fusion::FusionState s = fusion::fuse(g, g.constant(c.h_audio), g.constant(c.h_text), c.cfg);
    CHECK(s.self_a.value() == c.h_audio);
    CHECK(s.cross_a.value() == c.h_text);
  }
}

TEST_CASE("separate cross projections register their own tensors") {
  ModelConfig cfg = ModelConfig::reduced(4, 3, 3, 4);
  cfg.separate_cross_projections = true;
  Rng rng(1);
  ParameterStore store;
  fusion::register_params(store, cfg, rng);
  CHECK(store.find("fus.xattn.a.q") != nullptr);
  CHECK(store.find("fus.xattn.l.v") != nullptr);
}

TEST_CASE("cross attention rejects mismatched utterance counts") {
  FusionCase c = make_case(4, 4, 5);
  Graph g(c.store);
  ad::Var a = g.constant(Matrix::Ones(3, 4));
  ad::Var l = g.constant(Matrix::Ones(4, 4));
  CHECK_THROWS_AS(fusion::cross_attention(g, a, l, Modality::kAudio, c.cfg), std::invalid_argument);
  CHECK_THROWS_AS(fusion::fuse(g, a, l, c.cfg), std::invalid_argument);
}

TEST_SUITE_END();
