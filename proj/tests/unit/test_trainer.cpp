#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "conglude/errors.hpp"
#include "conglude/synth.hpp"
#include "conglude/trainer.hpp"
#include "test_support.hpp"

using namespace conglude;
using namespace conglude::train;

namespace {

prot::SynthDataset toy_dataset(std::size_t proteins = 3, std::size_t ligands = 12, std::uint64_t seed = 2) {
  prot::SynthConfig sc;
  sc.seed = seed;
  sc.n_proteins = proteins;
  sc.residues_per_protein = 14;
  sc.n_ligands = ligands;
  sc.residue_feature_dim = 8;
  sc.ligand_feature_dim = 6;
  return prot::synth_dataset(sc);
}

TrainConfig toy_config() {
  TrainConfig c;
  c.encoder.residue_in = 8;
  c.encoder.ligand_in = 6;
  c.encoder.hidden = 8;
  c.encoder.layers = 2;
  c.encoder.contrast_dim = 8;
  c.encoder.ligand_hidden = 16;
  c.loss = loss::LossConfig::for_dim(8);
  c.sb_batch_size = 4;
  c.lb_proteins_per_batch = 2;
  c.lr = 0.01;
  c.max_epochs = 3;
  c.seed = 4;
  return c;
}

std::string frozen_hash(const enc::Model& m) {
  return m.params().sha256([](const std::string& n) { return !enc::Model::ligand_batch_trainable(n); });
}

}  // namespace

TEST_CASE("structure-based sampler covers each epoch exactly once") {
  std::mt19937_64 rng(1);
  SbSampler one(1);
  CHECK(one.next(4, rng) == std::vector<std::size_t>{0});
  SbSampler s(10);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> seen;
    while (true) {
      for (std::size_t i : s.next(4, rng)) seen.insert(i);
      if (s.epoch_finished()) break;
    }
    CHECK(seen.size() == 10);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);
  }
  std::mt19937_64 r1(9), r2(9);
  SbSampler a(7), b(7);
  for (int i = 0; i < 5; ++i) CHECK(a.next(3, r1) == b.next(3, r2));
}

TEST_CASE("ligand-based sampler ratio, availability, and cap") {
  TrainData data;
  LbProtein rich{0, {}, {}};
  for (std::size_t i = 0; i < 20; ++i) rich.actives.push_back(i);
  for (std::size_t i = 20; i < 200; ++i) rich.inactives.push_back(i);
  data.lb.push_back(rich);
  TrainConfig cfg;
  cfg.lb_proteins_per_batch = 3;
  cfg.lb_actives_per_protein = 4;
  std::mt19937_64 rng(2);
  auto batch = sample_lb_batch(data, rng, cfg);
  REQUIRE(batch.items.size() == 3);
  for (const auto& item : batch.items) {
    REQUIRE(item.labels.size() == 16);
    CHECK(std::count(item.labels.begin(), item.labels.end(), 1) == 4);
    std::set<std::size_t> distinct(item.ligands.begin(), item.ligands.end());
    CHECK(distinct.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK((item.labels[i] == 1) == (item.ligands[i] < 20));
  }

  TrainData poor;
  LbProtein few{0, {0, 1}, {}};
  for (std::size_t i = 2; i < 30; ++i) few.inactives.push_back(i);
  poor.lb.push_back(few);
  batch = sample_lb_batch(poor, rng, cfg);
  CHECK(std::count(batch.items[0].labels.begin(), batch.items[0].labels.end(), 1) == 2);
  CHECK(batch.items[0].labels.size() == 8);

  cfg.lb_actives_per_protein = 100;
  cfg.lb_active_cap = 5;
  batch = sample_lb_batch(data, rng, cfg);
  CHECK(std::count(batch.items[0].labels.begin(), batch.items[0].labels.end(), 1) == 5);
  CHECK(batch.items[0].labels.size() == 20);

  CHECK_THROWS_AS(sample_lb_batch(TrainData{}, rng, cfg), ContractError);
}

TEST_CASE("prepare_data builds complexes and labelled pairs") {
  const auto ds = toy_dataset();
  const auto cfg = toy_config();
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  CHECK(data.proteins.size() == 3);
  CHECK(data.complexes.size() == 6);
  CHECK(data.lb.size() == 3);
  CHECK(data.ligand_features.rows() == 12);
  for (const auto& pp : data.proteins) {
    CHECK(pp.site_centers.size() == 2);
    CHECK(std::count(pp.residue_labels.begin(), pp.residue_labels.end(), 1) > 0);
  }
  // a site referencing an unknown ligand is skipped with a warning
  auto broken = ds.proteins;
  broken[0].sites[0].ligand_id = "missing";
  const auto partial = prepare_data(model, broken, ds.ligands, ds.activities);
  CHECK(partial.complexes.size() == 5);
  CHECK_FALSE(partial.warnings.empty());
}

TEST_CASE("ligand-based step leaves frozen parameters bit-identical") {
  const auto ds = toy_dataset();
  const auto cfg = toy_config();
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  AdamW opt(cfg.adam);
  std::mt19937_64 rng(5);
  const std::string before = frozen_hash(model);
  const std::string all_before = model.params().sha256();
  for (int i = 0; i < 3; ++i) train_step_lb(model, opt, 0.01, data, sample_lb_batch(data, rng, cfg), cfg.loss, rng);
  CHECK(frozen_hash(model) == before);
  CHECK(model.params().sha256() != all_before);
}

TEST_CASE("ligand-based loss reports the scaled value") {
  const auto ds = toy_dataset();
  auto cfg = toy_config();
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  std::mt19937_64 rng(5);
  const auto batch = sample_lb_batch(data, rng, cfg);
  cfg.loss.lb_scale = 1.0;
  const double unit = lb_loss(model, data, batch, cfg.loss, false, nullptr).scalars.lb;
  cfg.loss.lb_scale = 6.0;
  CHECK(lb_loss(model, data, batch, cfg.loss, false, nullptr).scalars.lb == doctest::Approx(6.0 * unit).epsilon(1e-15));
}

TEST_CASE("with every loss disabled a step changes nothing") {
  const auto ds = toy_dataset();
  auto cfg = toy_config();
  cfg.loss.enable_geometric = cfg.loss.enable_p2m = cfg.loss.enable_m2p = cfg.loss.enable_m2b = cfg.loss.enable_lb = false;
  cfg.loss.enable_lb = false;
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  AdamW opt(cfg.adam);
  std::mt19937_64 rng(5);
  const std::string before = model.params().sha256();
  const auto s = train_step_sb(model, opt, 0.01, data, {0, 1, 2}, cfg.loss, rng);
  CHECK(s.total == 0.0);
  const auto l = train_step_lb(model, opt, 0.01, data, sample_lb_batch(data, rng, cfg), cfg.loss, rng);
  CHECK(l.total == 0.0);
  CHECK(model.params().sha256() == before);
}

TEST_CASE("structure-based loss decreases over 50 steps on a 4-complex set") {
  const auto ds = toy_dataset(2, 4, 6);
  auto cfg = toy_config();
  enc::Model model(cfg.encoder, 3);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  REQUIRE(data.complexes.size() == 4);
  const std::vector<std::size_t> all{0, 1, 2, 3};
  const double before = sb_loss(model, data, all, cfg.loss, false, nullptr).scalars.total;
  AdamW opt(cfg.adam);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto s = train_step_sb(model, opt, cfg.lr, data, all, cfg.loss, rng);
    REQUIRE(std::isfinite(s.total));
  }
  const double after = sb_loss(model, data, all, cfg.loss, false, nullptr).scalars.total;
  CHECK(after < 0.5 * before);
}

TEST_CASE("structure-based loss terms are consistent") {
  const auto ds = toy_dataset();
  const auto cfg = toy_config();
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  const auto l = sb_loss(model, data, {0, 3, 5}, cfg.loss, false, nullptr);
  const auto& s = l.scalars;
  CHECK(s.geometric == doctest::Approx(s.bsc + s.seg + s.conf));
  CHECK(s.total == doctest::Approx(s.geometric + s.p2m + s.m2p + s.m2b));
  CHECK(l.total.item() == doctest::Approx(s.total));
}

TEST_CASE("composed training losses pass finite-difference checks") {
  const auto ds = toy_dataset(2, 4, 6);
  auto cfg = toy_config();
  cfg.encoder.hidden = 4;
  cfg.encoder.contrast_dim = 4;
  cfg.encoder.ligand_hidden = 4;
  cfg.loss = loss::LossConfig::for_dim(4);
  enc::Model model(cfg.encoder, 3);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  const auto params = model.params().entries();
  auto r = testing::check_gradients(
      params, [&] { return sb_loss(model, data, {0, 1, 2, 3}, cfg.loss, false, nullptr).total; }, 1e-5, 3);
  CHECK_MESSAGE(r.max_rel < 1e-4, r.worst);
  std::mt19937_64 rng(3);
  const auto batch = sample_lb_batch(data, rng, cfg);
  std::vector<std::pair<std::string, Var>> trainable;
  for (const auto& e : params)
    if (enc::Model::ligand_batch_trainable(e.first)) trainable.push_back(e);
  r = testing::check_gradients(trainable, [&] { return lb_loss(model, data, batch, cfg.loss, false, nullptr).total; });
  CHECK_MESSAGE(r.max_rel < 1e-5, r.worst);
}

TEST_CASE("plateau schedule and early stopping follow the improvement history") {
  const auto ds = toy_dataset();
  auto cfg = toy_config();
  // No loss, no decay: parameters never move, so only epoch 0 improves.
  cfg.loss.enable_geometric = cfg.loss.enable_p2m = cfg.loss.enable_m2p = cfg.loss.enable_m2b = cfg.loss.enable_lb = false;
  cfg.max_epochs = 50;
  cfg.plateau_patience = 2;
  cfg.early_stop_patience = 5;
  cfg.min_lr = 1e-5;
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  const auto res = fit(model, cfg, data);
  CHECK(res.early_stopped);
  REQUIRE(res.epochs.size() == 6);
  CHECK(res.best_epoch == 0);
  const std::vector<double> expect_lr{0.01, 0.01, 0.01, 0.001, 0.001, 1e-4};
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(res.epochs[e].improved == (e == 0));
    CHECK(res.epochs[e].lr == doctest::Approx(expect_lr[e]).epsilon(1e-12));
  }
}

TEST_CASE("learning rate never drops below its floor") {
  const auto ds = toy_dataset();
  auto cfg = toy_config();
  cfg.loss.enable_geometric = cfg.loss.enable_p2m = cfg.loss.enable_m2p = cfg.loss.enable_m2b = cfg.loss.enable_lb = false;
  cfg.max_epochs = 12;
  cfg.plateau_patience = 1;
  cfg.early_stop_patience = 100;
  cfg.min_lr = 1e-4;
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  const auto res = fit(model, cfg, data);
  CHECK(res.epochs.size() == 12);
  CHECK(res.epochs.back().lr == doctest::Approx(1e-4));
}

TEST_CASE("identical config and seed give identical logs") {
  const auto ds = toy_dataset();
  auto cfg = toy_config();
  cfg.max_epochs = 2;
  auto run = [&] {
    enc::Model model(cfg.encoder, 1);
    const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
    std::string log;
    fit(model, cfg, data, nullptr, [&](const EpochRecord& r) { log += r.to_json() + "\n"; });
    return std::make_pair(log, model.params().sha256());
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK_FALSE(a.first.empty());
}

TEST_CASE("structure-only data trains with structure-based steps only") {
  const auto ds = toy_dataset();
  auto cfg = toy_config();
  cfg.max_epochs = 2;
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, {});
  CHECK_FALSE(data.has_lb());
  const auto res = fit(model, cfg, data);
  for (const auto& s : res.steps) CHECK(s.structure_based);
  for (const auto& e : res.epochs) CHECK(e.lb_steps == 0);

  // disabling the ligand-based loss has the same effect on mixed data
  cfg.loss.enable_lb = false;
  enc::Model m2(cfg.encoder, 1);
  const auto mixed = prepare_data(m2, ds.proteins, ds.ligands, ds.activities);
  for (const auto& s : fit(m2, cfg, mixed).steps) CHECK(s.structure_based);
}

TEST_CASE("mixed data alternates between batch kinds") {
  const auto ds = toy_dataset();
  auto cfg = toy_config();
  cfg.max_epochs = 4;
  enc::Model model(cfg.encoder, 1);
  const auto data = prepare_data(model, ds.proteins, ds.ligands, ds.activities);
  const auto res = fit(model, cfg, data);
  std::size_t sb = 0, lb = 0;
  for (const auto& s : res.steps) (s.structure_based ? sb : lb) += 1;
  CHECK(sb > 0);
  CHECK(lb > 0);
}

TEST_CASE("training config parsing") {
  const auto kv = KeyValueConfig::parse("lr = 0.05\nseed = 12\nenable_m2b = false\ncontrast_dim = 16\n");
  const auto cfg = config_from(kv);
  CHECK(cfg.lr == 0.05);
  CHECK(cfg.seed == 12);
  CHECK_FALSE(cfg.loss.enable_m2b);
  CHECK(cfg.encoder.contrast_dim == 16);
  CHECK(cfg.loss.tau_m2p == doctest::Approx(0.25));
  CHECK_THROWS_AS(config_from(KeyValueConfig::parse("learning_rate = 1\n")), FormatError);
  TrainConfig bad;
  bad.plateau_factor = 1.5;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}
