#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "conglude/config.hpp"
#include "conglude/encoder.hpp"
#include "conglude/io.hpp"
#include "conglude/losses.hpp"
#include "conglude/optim.hpp"

namespace conglude::train {

struct TrainConfig {
  enc::EncoderConfig encoder;
  loss::LossConfig loss = loss::LossConfig::for_dim(256);
  AdamWOptions adam;

  std::size_t sb_batch_size = 64;
  std::size_t lb_proteins_per_batch = 16;
  std::size_t lb_actives_per_protein = 10000;  // requested a, before availability
  std::size_t lb_active_cap = 10000;
  std::size_t lb_inactives_per_active = 3;
  double sb_probability = 0.5;  // chance a step is structure-based when both kinds exist

  double lr = 1e-3;
  double plateau_factor = 0.1;
  std::size_t plateau_patience = 30;
  double min_lr = 1e-6;
  std::size_t early_stop_patience = 100;
  std::size_t max_epochs = 1000;
  std::size_t max_steps = 0;  // 0 = no step limit
  std::uint64_t seed = 0;

  void validate() const;
};

// Recognised config keys and conversion. Keys absent from the file keep
// their defaults; unknown keys are rejected.
const std::set<std::string>& config_keys();
TrainConfig config_from(const KeyValueConfig& kv);

struct PreparedProtein {
  std::string id;
  prot::ProteinGraph graph;
  prot::VirtualNodeInit init;
  std::vector<prot::Vec3> site_centers;
  std::vector<std::string> site_ligands;
  std::vector<std::uint8_t> residue_labels;  // union over sites
};

struct SbComplex {
  std::size_t protein = 0;
  std::size_t site = 0;
  std::size_t ligand = 0;
};

struct LbProtein {
  std::size_t protein = 0;
  std::vector<std::size_t> actives;
  std::vector<std::size_t> inactives;
};

struct TrainData {
  std::vector<PreparedProtein> proteins;
  std::vector<std::string> ligand_ids;
  Tensor ligand_features;  // ligands x W
  std::vector<SbComplex> complexes;
  std::vector<LbProtein> lb;
  std::vector<std::string> warnings;

  bool has_sb() const { return !complexes.empty(); }
  bool has_lb() const { return !lb.empty(); }
};

// Builds graphs and site annotations. Sites whose ligand is unknown or that
// have no contact residue are skipped with a warning; activities referencing
// unknown proteins or ligands likewise.
TrainData prepare_data(const enc::Model& model, const std::vector<prot::ProteinRecord>& proteins,
                       const std::vector<data::LigandRecord>& ligands,
                       const std::vector<data::ActivityRecord>& activities);

/// Epoch-wise sampling without replacement over the structure-based complexes.
class SbSampler {
 public:
  explicit SbSampler(std::size_t n) : n_(n) {}
  // Next batch of complex indices; a new shuffled epoch starts when the
  // previous one is exhausted.
  std::vector<std::size_t> next(std::size_t batch_size, std::mt19937_64& rng);
  bool epoch_finished() const { return pos_ >= order_.size(); }

 private:
  std::size_t n_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct LbItem {
  std::size_t protein = 0;
  std::vector<std::size_t> ligands;
  std::vector<std::uint8_t> labels;
};

struct LbBatch {
  std::vector<LbItem> items;
};

LbBatch sample_lb_batch(const TrainData& data, std::mt19937_64& rng, const TrainConfig& cfg);

struct StepScalars {
  bool structure_based = true;
  double total = 0.0;
  double geometric = 0.0;
  double bsc = 0.0;
  double seg = 0.0;
  double conf = 0.0;
  double p2m = 0.0;
  double m2p = 0.0;
  double m2b = 0.0;
  double lb = 0.0;  // scaled
};

// Builds the structure-based loss for a batch of complexes (graph only, no
// update). `train` enables ligand dropout.
struct SbLoss {
  Var total;
  StepScalars scalars;
};
SbLoss sb_loss(const enc::Model& model, const TrainData& data, const std::vector<std::size_t>& batch,
               const loss::LossConfig& cfg, bool train, std::mt19937_64* rng);

struct LbLoss {
  Var total;
  StepScalars scalars;
};
LbLoss lb_loss(const enc::Model& model, const TrainData& data, const LbBatch& batch, const loss::LossConfig& cfg,
               bool train, std::mt19937_64* rng);

StepScalars train_step_sb(enc::Model& model, AdamW& opt, double lr, const TrainData& data,
                          const std::vector<std::size_t>& batch, const loss::LossConfig& cfg, std::mt19937_64& rng);
StepScalars train_step_lb(enc::Model& model, AdamW& opt, double lr, const TrainData& data, const LbBatch& batch,
                          const loss::LossConfig& cfg, std::mt19937_64& rng);

// Lower is better: mean normalized rank of the true ligand among all
// complex ligands (protein embedding vs m_p), plus the fraction of sites
// missed at DCC 4 A when the geometric loss is on, plus mean unscaled LB
// cross-entropy over all labelled pairs.
double validation_metric(const enc::Model& model, const TrainData& data, const loss::LossConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  std::size_t sb_steps = 0;
  std::size_t lb_steps = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double mean_sb = 0.0;
  double mean_lb = 0.0;
  double metric = 0.0;
  bool improved = false;

  std::string to_json() const;
};

struct FitResult {
  std::vector<EpochRecord> epochs;
  std::size_t total_steps = 0;
  double best_metric = 0.0;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  std::vector<StepScalars> steps;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Alternating training loop. The model holds the best parameters on return.
// A non-finite loss or gradient restores the best parameters and rethrows
// NumericError.
FitResult fit(enc::Model& model, const TrainConfig& cfg, const TrainData& train,
              const TrainData* validation = nullptr, const EpochCallback& on_epoch = {});

}  // namespace conglude::train
