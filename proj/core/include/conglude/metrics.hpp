#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "conglude/protein.hpp"

namespace conglude::metrics {

struct RankedEval {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> ids;  // optional; used for tie-breaking

  std::size_t positives() const;
  // Equal lengths, finite scores; `need_both` also requires at least one
  // positive and one negative.
  void validate(bool need_both) const;
};

// Item indices by score descending; ties by id ascending (index when ids
// are absent).
std::vector<std::size_t> ranking_order(const RankedEval& e);

double auroc(const RankedEval& e);
double bedroc(const RankedEval& e, double alpha = 85.0);
double enrichment_factor(const RankedEval& e, double fraction);
double auprc(const RankedEval& e);
double delta_auprc(const RankedEval& e);

enum class SiteMode { DCC, DCA };

struct PredictedPocket {
  prot::Vec3 center{};
  double confidence = 0.0;
};

struct TrueSite {
  prot::Vec3 center{};
  std::vector<prot::Vec3> ligand_atoms;
};

struct ProteinSites {
  std::vector<PredictedPocket> predictions;  // any order; ranked by confidence
  std::vector<TrueSite> sites;
};

struct Rate {
  std::size_t hits = 0;
  std::size_t total = 0;
  double value() const { return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0; }
};

double site_distance(const prot::Vec3& predicted, const TrueSite& site, SiteMode mode);

// For a protein with k true sites, the k most confident predictions are
// kept (ties: lower index); a site counts when one of them is within
// `threshold`.
Rate site_success_rates(const std::vector<ProteinSites>& proteins, double threshold = 4.0,
                        SiteMode mode = SiteMode::DCC);

struct SelectionCase {
  prot::Vec3 top_pocket{};        // top-1 pocket for the (protein, ligand) pair
  std::vector<TrueSite> sites;    // the ligand's true sites on that protein
};

Rate pocket_selection_success(const std::vector<SelectionCase>& cases, double threshold = 4.0,
                              SiteMode mode = SiteMode::DCC);

// Averages values that share a group (e.g. several structures of one
// target). Keys missing from `group` form their own group.
std::map<std::string, double> group_average(const std::map<std::string, double>& values,
                                            const std::map<std::string, std::string>& group);

struct ReportRow {
  std::string task;
  std::string target;
  std::string metric;
  double value = 0.0;
};

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);

}  // namespace conglude::metrics
