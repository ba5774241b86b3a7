#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "conglude/encoder.hpp"
#include "conglude/errors.hpp"
#include "test_support.hpp"

using namespace conglude;
using namespace conglude::enc;

namespace {

EncoderConfig small_config(std::size_t in = 6, std::size_t hidden = 8, std::size_t d = 4) {
  EncoderConfig c;
  c.residue_in = in;
  c.hidden = hidden;
  c.layers = 2;
  c.virtual_nodes = 8;
  c.contrast_dim = d;
  c.ligand_in = 5;
  c.ligand_hidden = 7;
  return c;
}

prot::ProteinGraph random_graph(std::mt19937_64& rng, std::size_t s, std::size_t in) {
  std::uniform_real_distribution<double> u(-7.0, 7.0);
  prot::ProteinGraph g;
  g.id = "g";
  g.coords = Tensor::matrix(s, 3);
  for (std::size_t i = 0; i < g.coords.size(); ++i) g.coords[i] = u(rng);
  g.features = testing::random_matrix(s, in, rng);
  g.edges = prot::build_knn_edges(g.coords);
  return g;
}

void zero_param(Model& m, const std::string& name) {
  Var p = m.params().at(name);
  p.mutable_value().fill(0.0);
}

}  // namespace

TEST_CASE("zero final-layer weights leave coordinates and features unchanged") {
  Model m(small_config(), 3);
  for (const auto& [name, v] : m.params().entries()) {
    if (!name.starts_with("layer")) continue;
    if (name.find(".l1.") != std::string::npos) zero_param(m, name);
  }
  std::mt19937_64 rng(1);
  const auto g = random_graph(rng, 20, 6);
  const auto init = m.make_init(g);
  const auto out = m.encode_protein(g, init);
  CHECK(out.coords.value() == g.coords);
  CHECK(out.pocket_coords.value() == init.coords);
  // features equal the input projection; pocket and protein features its mean
  const Tensor& w = m.params().at("input.l0.weight").value();
  const Tensor& b = m.params().at("input.l0.bias").value();
  Tensor expect = Tensor::matrix(20, 8);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t k = 0; k < 8; ++k) {
      double acc = b[k];
      for (std::size_t j = 0; j < 6; ++j) acc += g.features(i, j) * w(j, k);
      expect(i, k) = acc;
    }
  CHECK(testing::max_rel_diff(out.features.value(), expect) < 1e-12);
  for (std::size_t k = 0; k < 8; ++k) {
    double mean = 0;
    for (std::size_t i = 0; i < 20; ++i) mean += expect(i, k) / 20.0;
    CHECK(out.protein.value()(0, k) == doctest::Approx(mean).epsilon(1e-12));
    for (std::size_t n = 0; n < 8; ++n) CHECK(out.pocket_features.value()(n, k) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("encoder is E(3) equivariant") {
  EncoderConfig cfg = small_config();
  cfg.coord_init_gain = 1.0;  // make coordinate updates non-negligible
  Model m(cfg, 11);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const auto g = random_graph(rng, 12 + 4 * trial, 6);
    const auto init = m.make_init(g);
    const auto a = m.encode_protein(g, init);
    const auto motion = testing::random_motion(rng, 20.0, trial % 2 == 1);
    prot::ProteinGraph moved = g;
    moved.coords = motion.apply_rows(g.coords);
    prot::VirtualNodeInit moved_init = init;
    moved_init.coords = motion.apply_rows(init.coords);
    const auto b = m.encode_protein(moved, moved_init);
    CHECK(testing::max_rel_diff(b.coords.value(), motion.apply_rows(a.coords.value())) < 1e-4);
    CHECK(testing::max_rel_diff(b.pocket_coords.value(), motion.apply_rows(a.pocket_coords.value())) < 1e-4);
    CHECK(testing::max_rel_diff(b.features.value(), a.features.value()) < 1e-4);
    CHECK(testing::max_rel_diff(b.pocket_features.value(), a.pocket_features.value()) < 1e-4);
    CHECK(testing::max_rel_diff(b.protein.value(), a.protein.value()) < 1e-4);
    CHECK(testing::max_rel_diff(b.confidence.value(), a.confidence.value()) < 1e-4);
    // pocket coordinates actually moved away from the initial sphere
    CHECK(testing::max_rel_diff(a.pocket_coords.value(), init.coords) > 1e-6);
  }
}

TEST_CASE("encoder is permutation equivariant in residue index") {
  Model m(small_config(), 5);
  std::mt19937_64 rng(2);
  const auto g = random_graph(rng, 18, 6);
  std::vector<std::size_t> perm(18);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  prot::ProteinGraph pg;
  pg.coords = Tensor::matrix(18, 3);
  pg.features = Tensor::matrix(18, 6);
  for (std::size_t i = 0; i < 18; ++i) {
    for (std::size_t k = 0; k < 3; ++k) pg.coords(i, k) = g.coords(perm[i], k);
    for (std::size_t k = 0; k < 6; ++k) pg.features(i, k) = g.features(perm[i], k);
  }
  pg.edges = prot::build_knn_edges(pg.coords);
  const auto a = m.encode_protein(g);
  const auto b = m.encode_protein(pg);
  CHECK(testing::max_rel_diff(b.pocket_coords.value(), a.pocket_coords.value()) < 1e-9);
  CHECK(testing::max_rel_diff(b.pocket_features.value(), a.pocket_features.value()) < 1e-9);
  CHECK(testing::max_rel_diff(b.protein.value(), a.protein.value()) < 1e-9);
  CHECK(testing::max_rel_diff(b.confidence.value(), a.confidence.value()) < 1e-9);
  double worst = 0;
  for (std::size_t i = 0; i < 18; ++i) {
    for (std::size_t k = 0; k < 8; ++k)
      worst = std::max(worst, std::abs(b.features.value()(i, k) - a.features.value()(perm[i], k)));
    worst = std::max(worst, std::abs(b.segmentation.value()(i, 0) - a.segmentation.value()(perm[i], 0)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("coincident residues do not produce NaN") {
  Model m(small_config(), 7);
  std::mt19937_64 rng(4);
  auto g = random_graph(rng, 6, 6);
  for (int k = 0; k < 3; ++k) g.coords(1, k) = g.coords(0, k);
  g.edges = prot::build_knn_edges(g.coords);
  const auto out = m.encode_protein(g);
  CHECK(out.coords.value().all_finite());
  CHECK(out.features.value().all_finite());
  CHECK(out.pocket_coords.value().all_finite());
}

TEST_CASE("encoder output shapes and ranges") {
  Model m(small_config(), 9);
  std::mt19937_64 rng(6);
  const auto g = random_graph(rng, 10, 6);
  const auto out = m.encode_protein(g);
  CHECK(out.coords.value().shape() == std::vector<std::size_t>{10, 3});
  CHECK(out.features.value().shape() == std::vector<std::size_t>{10, 8});
  CHECK(out.pocket_coords.value().shape() == std::vector<std::size_t>{8, 3});
  CHECK(out.pocket_features.value().shape() == std::vector<std::size_t>{8, 8});
  CHECK(out.protein.value().shape() == std::vector<std::size_t>{1, 8});
  for (double v : out.segmentation.value().values()) CHECK((v > 0.0 && v < 1.0));
  for (double v : out.confidence.value().values()) CHECK((v > 0.0 && v < 1.0));
  prot::ProteinGraph bad = g;
  bad.features = Tensor::matrix(10, 5);
  CHECK_THROWS_AS(m.encode_protein(bad), ShapeError);
}

TEST_CASE("confidence head") {
  EncoderConfig cfg = small_config(6, 2, 4);
  Model m(cfg, 1);
  SUBCASE("zero weights give 0.5") {
    for (const char* n : {"conf_head.l0.weight", "conf_head.l0.bias", "conf_head.l1.weight", "conf_head.l1.bias"})
      zero_param(m, n);
    const auto c = m.confidence_head(Var::constant(Tensor::from_rows({{1.0, -2.0}, {3.0, 0.5}})));
    CHECK(c.value()(0, 0) == 0.5);
    CHECK(c.value()(1, 0) == 0.5);
  }
  SUBCASE("hand evaluation") {
    Var w0 = m.params().at("conf_head.l0.weight");
    Var b0 = m.params().at("conf_head.l0.bias");
    Var w1 = m.params().at("conf_head.l1.weight");
    Var b1 = m.params().at("conf_head.l1.bias");
    w0.mutable_value() = Tensor::from_rows({{0.5, -1.0}, {2.0, 0.25}});
    b0.mutable_value() = Tensor::from_rows({{0.1, -0.2}});
    w1.mutable_value() = Tensor::from_rows({{1.5}, {-0.75}});
    b1.mutable_value() = Tensor::from_rows({{0.3}});
    const double x0 = 1.0, x1 = -0.5;
    auto silu = [](double v) { return v / (1.0 + std::exp(-v)); };
    const double h0 = silu(x0 * 0.5 + x1 * 2.0 + 0.1);
    const double h1 = silu(x0 * -1.0 + x1 * 0.25 - 0.2);
    const double expect = 1.0 / (1.0 + std::exp(-(1.5 * h0 - 0.75 * h1 + 0.3)));
    const auto c = m.confidence_head(Var::constant(Tensor::from_rows({{x0, x1}})));
    CHECK(c.value()(0, 0) == doctest::Approx(expect).epsilon(1e-14));
    // monotone in the final bias
    b1.mutable_value()(0, 0) = 0.8;
    CHECK(m.confidence_head(Var::constant(Tensor::from_rows({{x0, x1}}))).value()(0, 0) > expect);
  }
}

TEST_CASE("dbscan examples") {
  CHECK(dbscan(Tensor::from_rows({{0, 0, 0}, {3, 0, 0}, {6, 0, 0}}), 4.0, 1) == std::vector<std::size_t>{0, 0, 0});
  CHECK(dbscan(Tensor::from_rows({{0, 0, 0}, {10, 0, 0}}), 4.0, 1) == std::vector<std::size_t>{0, 1});
  CHECK(dbscan(Tensor::from_rows({{1, 2, 3}, {1, 2, 3}}), 4.0, 1) == std::vector<std::size_t>{0, 0});
  // eps is inclusive
  CHECK(dbscan(Tensor::from_rows({{0, 0, 0}, {4, 0, 0}}), 4.0, 1) == std::vector<std::size_t>{0, 0});
  // with min_pts 3 the isolated point is noise and becomes its own cluster
  CHECK(dbscan(Tensor::from_rows({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {20, 0, 0}}), 1.5, 3) ==
        std::vector<std::size_t>{0, 0, 0, 1});
}

TEST_CASE("dbscan matches the transitive-closure oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> count(1, 50);
    const std::size_t n = static_cast<std::size_t>(count(rng));
    std::uniform_real_distribution<double> u(0.0, trial % 3 == 0 ? 10.0 : 25.0);
    std::vector<prot::Vec3> pts;
    Tensor t = Tensor::matrix(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back({u(rng), u(rng), u(rng)});
      for (int k = 0; k < 3; ++k) t(i, k) = pts.back()[k];
    }
    REQUIRE(dbscan(t, 4.0, 1) == testing::transitive_closure_clusters(pts, 4.0));
  }
}

TEST_CASE("cluster_pockets averages members") {
  Model m(small_config(), 2);
  EncoderOutput out;
  out.pocket_coords = Var::constant(Tensor::from_rows({{0, 0, 0}, {3, 0, 0}, {6, 0, 0}, {30, 0, 0}}));
  out.pocket_features = Var::constant(Tensor::from_rows({{1, 0}, {2, 0}, {3, 0}, {0, 9}}));
  out.confidence = Var::constant(Tensor::from_rows({{0.2}, {0.4}, {0.6}, {0.9}}));
  out.protein = Var::constant(Tensor::from_rows({{1, 1}}));
  const auto ps = m.cluster_pockets(out);
  REQUIRE(ps.size() == 2);
  CHECK(ps.centers.value()(0, 0) == doctest::Approx(3.0));
  CHECK(ps.centers.value()(1, 0) == 30.0);
  CHECK(ps.embeddings.value()(0, 0) == doctest::Approx(2.0));
  CHECK(ps.confidence.value()(0, 0) == doctest::Approx(0.4));
  CHECK(ps.assignment == std::vector<std::size_t>{0, 0, 0, 1});
}

TEST_CASE("projection heads are affine maps") {
  Model m(small_config(6, 2, 3), 4);
  Var w = m.params().at("pocket_proj.l0.weight");
  Var b = m.params().at("pocket_proj.l0.bias");
  w.mutable_value() = Tensor::from_rows({{1, 2, 3}, {-1, 0, 0.5}});
  b.mutable_value() = Tensor::from_rows({{0.5, 0, -1}});
  PocketSet pre;
  pre.centers = Var::constant(Tensor::from_rows({{0, 0, 0}}));
  pre.embeddings = Var::constant(Tensor::from_rows({{2, 4}}));
  pre.confidence = Var::constant(Tensor::from_rows({{0.5}}));
  pre.protein = Var::constant(Tensor::from_rows({{1, 1}}));
  const auto ps = m.project(pre);
  CHECK(ps.embeddings.value() == Tensor::from_rows({{2 - 4 + 0.5, 4.0, 6 + 2 - 1}}));
  zero_param(m, "protein_proj.l0.weight");
  zero_param(m, "protein_proj.l0.bias");
  CHECK(m.project_protein(pre.protein).value() == Tensor::from_rows({{0, 0, 0}}));
}

TEST_CASE("ligand encoder") {
  Model m(small_config(6, 8, 4), 8);
  std::mt19937_64 rng(3);
  const Tensor f = testing::random_matrix(6, 5, rng);
  const Tensor emb = m.encode_ligands(Var::constant(f)).value();
  CHECK(emb.shape() == std::vector<std::size_t>{6, 8});
  // deterministic in evaluation mode
  CHECK(m.encode_ligands(Var::constant(f)).value() == emb);
  // batch order independent
  Tensor rev = f;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 5; ++k) rev(i, k) = f(5 - i, k);
  const Tensor emb_rev = m.encode_ligands(Var::constant(rev)).value();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 8; ++k) CHECK(emb_rev(i, k) == emb(5 - i, k));
  // identical features, identical embeddings
  Tensor twin = Tensor::matrix(2, 5);
  for (std::size_t k = 0; k < 5; ++k) twin(0, k) = twin(1, k) = f(0, k);
  const Tensor te = m.encode_ligands(Var::constant(twin)).value();
  for (std::size_t k = 0; k < 8; ++k) CHECK(te(0, k) == te(1, k));
  // zero weights: output is the final bias, so m_p and m_b are constant
  for (const char* n : {"ligand.l0.weight", "ligand.l1.weight"}) zero_param(m, n);
  const Tensor z = m.encode_ligands(Var::constant(f)).value();
  const Tensor& bias = m.params().at("ligand.l1.bias").value();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 8; ++k) CHECK(z(i, k) == bias[k]);
  CHECK_THROWS_AS(m.encode_ligands(Var::constant(Tensor::matrix(1, 4))), ShapeError);
}

TEST_CASE("ligand encoder dropout only in training mode") {
  Model m(small_config(), 8);
  std::mt19937_64 rng(3);
  const Tensor f = testing::random_matrix(4, 5, rng);
  std::mt19937_64 r1(1), r2(1);
  const Tensor a = m.encode_ligands(Var::constant(f), true, &r1).value();
  const Tensor b = m.encode_ligands(Var::constant(f), true, &r2).value();
  CHECK(a == b);
  CHECK(a != m.encode_ligands(Var::constant(f)).value());
}

TEST_CASE("trainable set on ligand batches") {
  CHECK(Model::ligand_batch_trainable("ligand.l0.weight"));
  CHECK(Model::ligand_batch_trainable("protein_proj.l0.bias"));
  CHECK_FALSE(Model::ligand_batch_trainable("pocket_proj.l0.weight"));
  CHECK_FALSE(Model::ligand_batch_trainable("layer0.rr.edge.l0.weight"));
  CHECK_FALSE(Model::ligand_batch_trainable("input.l0.weight"));
}

TEST_CASE("model checkpoint round trip reproduces outputs") {
  EncoderConfig cfg = small_config();
  cfg.sphere_margin = 3.5;
  Model m(cfg, 12);
  std::stringstream buf;
  write_checkpoint(buf, m.to_checkpoint());
  Model back(read_checkpoint(buf));
  CHECK(back.config().layers == 2);
  CHECK(back.config().hidden == 8);
  CHECK(back.config().sphere_margin == 3.5);
  CHECK(back.params().sha256() == m.params().sha256());
  std::mt19937_64 rng(5);
  const auto g = random_graph(rng, 9, 6);
  CHECK(back.encode_protein(g).pocket_coords.value() == m.encode_protein(g).pocket_coords.value());
  Checkpoint broken = m.to_checkpoint();
  ParamSet partial;
  for (const auto& [name, v] : broken.params.entries())
    if (name != "seg_head.l0.weight") partial.add(name, v.value());
  broken.params = std::move(partial);
  CHECK_THROWS_AS(Model{broken}, FormatError);
}
