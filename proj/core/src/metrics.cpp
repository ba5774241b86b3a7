#include "conglude/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "conglude/errors.hpp"
#include "conglude/io.hpp"

namespace conglude::metrics {

std::size_t RankedEval::positives() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
}

void RankedEval::validate(bool need_both) const {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  if (!ids.empty() && ids.size() != scores.size()) throw ShapeError("ids and scores differ in length");
  if (scores.empty()) throw ContractError("empty evaluation");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("non-finite score in evaluation");
  const std::size_t p = positives();
  if (p == 0) throw ContractError("evaluation needs at least one positive");
  if (need_both && p == scores.size()) throw ContractError("evaluation needs at least one negative");
}

std::vector<std::size_t> ranking_order(const RankedEval& e) {
  std::vector<std::size_t> order(e.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (e.scores[a] != e.scores[b]) return e.scores[a] > e.scores[b];
    if (!e.ids.empty() && e.ids[a] != e.ids[b]) return e.ids[a] < e.ids[b];
    return a < b;
  });
  return order;
}

double auroc(const RankedEval& e) {
  e.validate(true);
  const std::size_t n = e.scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return e.scores[a] < e.scores[b]; });
  // Mid-ranks (1-based) so that ties contribute one half.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && e.scores[idx[j]] == e.scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (e.labels[idx[k]]) pos_rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(e.positives());
  const double nn = static_cast<double>(n) - np;
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double bedroc(const RankedEval& e, double alpha) {
  e.validate(true);
  if (!(alpha > 0)) throw ContractError("bedroc alpha must be positive");
  const auto order = ranking_order(e);
  const double big_n = static_cast<double>(e.scores.size());
  const double n = static_cast<double>(e.positives());
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (e.labels[order[r]]) sum += std::exp(-alpha * static_cast<double>(r + 1) / big_n);
  const double ra = n / big_n;
  const double rie = (sum / n) / ((1.0 / big_n) * (1.0 - std::exp(-alpha)) / (std::exp(alpha / big_n) - 1.0));
  return rie * ra * std::sinh(alpha / 2.0) / (std::cosh(alpha / 2.0) - std::cosh(alpha / 2.0 - alpha * ra)) +
         1.0 / (1.0 - std::exp(alpha * (1.0 - ra)));
}

double enrichment_factor(const RankedEval& e, double fraction) {
  e.validate(false);
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("enrichment fraction must be in (0, 1]");
  const auto order = ranking_order(e);
  const std::size_t n = order.size();
  const auto top = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
  const std::size_t slice = std::clamp<std::size_t>(top, 1, n);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < slice; ++r) hits += e.labels[order[r]] ? 1 : 0;
  return (static_cast<double>(hits) / static_cast<double>(slice)) /
         (static_cast<double>(e.positives()) / static_cast<double>(n));
}

double auprc(const RankedEval& e) {
  e.validate(false);
  const std::size_t n = e.scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return e.scores[a] > e.scores[b]; });
  const double np = static_cast<double>(e.positives());
  double tp = 0, fp = 0, prev_recall = 0, ap = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && e.scores[idx[j]] == e.scores[idx[i]]) {
      (e.labels[idx[j]] ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / np;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double delta_auprc(const RankedEval& e) {
  return auprc(e) - static_cast<double>(e.positives()) / static_cast<double>(e.scores.size());
}

double site_distance(const prot::Vec3& predicted, const TrueSite& site, SiteMode mode) {
  if (mode == SiteMode::DCC) return prot::distance(predicted, site.center);
  if (site.ligand_atoms.empty()) throw ContractError("DCA needs ligand atoms");
  double d = std::numeric_limits<double>::infinity();
  for (const auto& a : site.ligand_atoms) d = std::min(d, prot::distance(predicted, a));
  return d;
}

Rate site_success_rates(const std::vector<ProteinSites>& proteins, double threshold, SiteMode mode) {
  Rate rate;
  for (const auto& p : proteins) {
    std::vector<std::size_t> order(p.predictions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return p.predictions[a].confidence > p.predictions[b].confidence;
    });
    order.resize(std::min(order.size(), p.sites.size()));
    for (const auto& site : p.sites) {
      ++rate.total;
      for (std::size_t k : order) {
        if (site_distance(p.predictions[k].center, site, mode) < threshold) {
          ++rate.hits;
          break;
        }
      }
    }
  }
  return rate;
}

Rate pocket_selection_success(const std::vector<SelectionCase>& cases, double threshold, SiteMode mode) {
  Rate rate;
  for (const auto& c : cases) {
    ++rate.total;
    for (const auto& site : c.sites) {
      if (site_distance(c.top_pocket, site, mode) < threshold) {
        ++rate.hits;
        break;
      }
    }
  }
  return rate;
}

std::map<std::string, double> group_average(const std::map<std::string, double>& values,
                                            const std::map<std::string, std::string>& group) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& [key, v] : values) {
    auto it = group.find(key);
    auto& slot = acc[it == group.end() ? key : it->second];
    slot.first += v;
    ++slot.second;
  }
  std::map<std::string, double> out;
  for (const auto& [g, s] : acc) out[g] = s.first / static_cast<double>(s.second);
  return out;
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "task,target,metric,value\n";
  for (const auto& r : rows) out << r.task << ',' << r.target << ',' << r.metric << ',' << data::format_double(r.value) << '\n';
}

}  // namespace conglude::metrics
