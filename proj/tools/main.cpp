#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "conglude/config.hpp"
#include "conglude/encoder.hpp"
#include "conglude/errors.hpp"
#include "conglude/io.hpp"
#include "conglude/metrics.hpp"
#include "conglude/mol.hpp"
#include "conglude/params.hpp"
#include "conglude/protein.hpp"
#include "conglude/screen.hpp"
#include "conglude/synth.hpp"
#include "conglude/trainer.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace conglude;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kDataFormat = 3, kNumeric = 4 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Global {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string manifest;
  std::vector<std::string> argv;
};

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("conglude");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  const char* env = std::getenv("CONGLUDE_LOG");
  if (!env) return;
  const std::string v = env;
  if (v == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (v == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else if (v != "info") {
    spdlog::warn("CONGLUDE_LOG='{}' not one of error, info, debug; using info", v);
  }
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw FormatError(std::string(what) + " not found: " + p.string());
}

// Destination of a command's manifest: --manifest, else next to its first
// file output, else nowhere.
void write_manifest(cli::RunManifest& m, const Global& g) {
  fs::path target;
  if (!g.manifest.empty()) {
    target = g.manifest;
  } else if (!m.outputs().empty()) {
    target = m.outputs().front();
    target += ".manifest.json";
  } else {
    return;
  }
  m.write(target);
  spdlog::debug("manifest written to {}", target.string());
}

// CSV text goes to `path`, or stdout when it is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (!to_stdout()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw FormatError("cannot open " + path + " for writing");
    }
  }
  std::ostream& stream() { return to_stdout() ? std::cout : file_; }
  bool to_stdout() const { return path_.empty() || path_ == "-"; }
  void close(cli::RunManifest& m) {
    if (to_stdout()) {
      std::cout.flush();
      return;
    }
    file_.close();
    if (!file_) throw FormatError("failed writing " + path_);
    m.add_output(path_);
  }

 private:
  std::string path_;
  std::ofstream file_;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("invalid number '" + tok + "' in list '" + text + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------- featurize

struct FeaturizeArgs {
  std::string input, output, stats_in, stats_out;
  int radius = 2;
  std::size_t width = 2048;
  bool skip_invalid = false;
};

int run_featurize(const FeaturizeArgs& a, const Global& g) {
  cli::RunManifest m("featurize", g.argv);
  m.set_seed(g.seed);
  m.phase("parse");
  require_file(a.input, "ligand file");
  m.add_input(a.input);
  const auto smiles = data::read_ligand_smiles(a.input);

  std::vector<std::string> ids;
  std::vector<mol::MolGraph> mols;
  std::size_t rejected = 0;
  for (const auto& s : smiles) {
    try {
      mols.push_back(mol::parse_smiles(s.smiles));
      ids.push_back(s.id);
    } catch (const mol::ParseError& e) {
      if (!a.skip_invalid) throw FormatError("ligand '" + s.id + "': " + e.what());
      spdlog::warn("skipping ligand '{}': {}", s.id, e.what());
      ++rejected;
    }
  }

  mol::FeaturizerConfig fc;
  fc.radius = a.radius;
  fc.fingerprint_width = a.width;
  if (!a.stats_in.empty()) {
    require_file(a.stats_in, "descriptor statistics");
    m.add_input(a.stats_in);
    std::ifstream in(a.stats_in);
    nlohmann::json j;
    try {
      in >> j;
      fc.descriptor_mean = j.at("descriptor_mean").get<std::vector<double>>();
      fc.descriptor_scale = j.at("descriptor_scale").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(a.stats_in + ": " + e.what());
    }
  } else if (!mols.empty()) {
    // Standardize with statistics of this ligand set.
    std::vector<double> mean(mol::kDescriptorCount, 0.0), sq(mol::kDescriptorCount, 0.0);
    for (const auto& mg : mols) {
      const auto d = mol::basic_descriptors(mg);
      for (std::size_t k = 0; k < d.size(); ++k) {
        mean[k] += d[k];
        sq[k] += d[k] * d[k];
      }
    }
    const double n = static_cast<double>(mols.size());
    fc.descriptor_scale.assign(mol::kDescriptorCount, 1.0);
    for (std::size_t k = 0; k < mean.size(); ++k) {
      mean[k] /= n;
      const double var = sq[k] / n - mean[k] * mean[k];
      if (var > 1e-12) fc.descriptor_scale[k] = std::sqrt(var);
    }
    fc.descriptor_mean = mean;
  }

  m.phase("featurize");
  std::vector<data::LigandRecord> out;
  out.reserve(mols.size());
  for (std::size_t i = 0; i < mols.size(); ++i) out.push_back({ids[i], mol::featurize_ligand(mols[i], fc).values});

  m.phase("write");
  data::write_ligand_features(a.output, out);
  m.add_output(a.output);
  if (!a.stats_out.empty()) {
    nlohmann::ordered_json j;
    j["radius"] = fc.radius;
    j["fingerprint_width"] = fc.fingerprint_width;
    j["descriptor_names"] = mol::descriptor_names();
    j["descriptor_mean"] = fc.descriptor_mean;
    j["descriptor_scale"] = fc.descriptor_scale;
    std::ofstream so(a.stats_out);
    so << j.dump(2) << "\n";
    if (!so) throw FormatError("failed writing " + a.stats_out);
    so.close();
    m.add_output(a.stats_out);
  }
  spdlog::info("featurized {} ligands ({} rejected), width {}", out.size(), rejected, fc.width());
  write_manifest(m, g);
  return kOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out_dir;
  prot::SynthConfig cfg;
};

int run_synth(SynthArgs a, const Global& g) {
  cli::RunManifest m("synth", g.argv);
  m.set_seed(g.seed);
  a.cfg.seed = g.seed;
  m.phase("generate");
  const auto ds = prot::synth_dataset(a.cfg);
  m.phase("write");
  fs::create_directories(a.out_dir);
  const fs::path dir = a.out_dir;
  data::write_proteins(dir / "proteins.jsonl", ds.proteins);
  data::write_ligand_features(dir / "ligands.txt", ds.ligands);
  data::write_activities(dir / "activities.tsv", ds.activities);
  for (const char* f : {"proteins.jsonl", "ligands.txt", "activities.tsv"}) m.add_output(dir / f);
  spdlog::info("wrote {} proteins, {} ligands, {} activities to {}", ds.proteins.size(), ds.ligands.size(),
               ds.activities.size(), a.out_dir);
  write_manifest(m, g);
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, proteins, ligands, activities, val_proteins, val_activities, checkpoint, log;
  std::size_t max_steps = 0;
  bool seed_given = false;
  bool max_steps_given = false;
};

// Path from the command line wins; otherwise the config value, relative to
// the config file's directory.
std::string resolve(const std::string& flag, const KeyValueConfig& kv, const std::string& key,
                    const fs::path& base) {
  if (!flag.empty()) return flag;
  const std::string v = kv.get_string(key, "");
  if (v.empty()) return v;
  const fs::path p = v;
  return p.is_absolute() ? v : (base / p).string();
}

int run_train(const TrainArgs& a, const Global& g) {
  cli::RunManifest m("train", g.argv);
  m.phase("load");
  KeyValueConfig kv;
  fs::path base = ".";
  if (!a.config.empty()) {
    require_file(a.config, "config");
    kv = KeyValueConfig::load(a.config);
    m.set_config(a.config);
    base = fs::path(a.config).parent_path();
  }
  train::TrainConfig cfg = train::config_from(kv);
  if (a.seed_given || !kv.contains("seed")) cfg.seed = g.seed;
  if (a.max_steps_given) cfg.max_steps = a.max_steps;
  m.set_seed(cfg.seed);

  const std::string proteins = resolve(a.proteins, kv, "proteins", base);
  const std::string ligands = resolve(a.ligands, kv, "ligands", base);
  const std::string activities = resolve(a.activities, kv, "activities", base);
  const std::string val_proteins = resolve(a.val_proteins, kv, "val_proteins", base);
  const std::string val_activities = resolve(a.val_activities, kv, "val_activities", base);
  const std::string checkpoint = resolve(a.checkpoint, kv, "checkpoint", base);
  const std::string log = resolve(a.log, kv, "log", base);
  if (proteins.empty() || ligands.empty()) throw UsageError("train needs proteins and ligands");
  if (checkpoint.empty()) throw UsageError("train needs a checkpoint output path");

  require_file(proteins, "protein file");
  require_file(ligands, "ligand feature file");
  const auto prot_records = data::read_proteins(proteins);
  const auto lig_records = data::read_ligand_features(ligands);
  m.add_input(proteins);
  m.add_input(ligands);
  std::vector<data::ActivityRecord> acts, val_acts;
  if (!activities.empty()) {
    require_file(activities, "activity file");
    acts = data::read_activities(activities);
    m.add_input(activities);
  }
  if (prot_records.empty() || lig_records.empty()) throw FormatError("training needs at least one protein and ligand");
  cfg.encoder.residue_in = prot_records.front().features.cols();
  cfg.encoder.ligand_in = lig_records.front().features.size();
  cfg.validate();

  enc::Model model(cfg.encoder, cfg.seed);
  const auto train_data = train::prepare_data(model, prot_records, lig_records, acts);
  for (const auto& w : train_data.warnings) spdlog::warn("{}", w);

  std::unique_ptr<train::TrainData> val_data;
  if (!val_proteins.empty()) {
    require_file(val_proteins, "validation protein file");
    m.add_input(val_proteins);
    if (!val_activities.empty()) {
      require_file(val_activities, "validation activity file");
      val_acts = data::read_activities(val_activities);
      m.add_input(val_activities);
    }
    val_data = std::make_unique<train::TrainData>(
        train::prepare_data(model, data::read_proteins(val_proteins), lig_records, val_acts));
    for (const auto& w : val_data->warnings) spdlog::warn("validation: {}", w);
  }
  spdlog::info("training on {} proteins, {} complexes, {} ligand-based proteins", train_data.proteins.size(),
               train_data.complexes.size(), train_data.lb.size());

  m.phase("train");
  std::ofstream log_out;
  if (!log.empty()) {
    log_out.open(log, std::ios::binary | std::ios::trunc);
    if (!log_out) throw FormatError("cannot open log " + log);
  }
  auto on_epoch = [&](const train::EpochRecord& r) {
    const std::string line = r.to_json();
    if (log_out.is_open()) log_out << line << '\n' << std::flush;
    spdlog::debug("{}", line);
  };

  train::FitResult result;
  try {
    result = train::fit(model, cfg, train_data, val_data.get(), on_epoch);
  } catch (const NumericError&) {
    // Keep the last good parameters on disk before failing.
    save_checkpoint(checkpoint, model.to_checkpoint());
    spdlog::error("numeric failure; best parameters saved to {}", checkpoint);
    throw;
  }

  m.phase("write");
  save_checkpoint(checkpoint, model.to_checkpoint());
  m.add_output(checkpoint);
  if (log_out.is_open()) {
    log_out.close();
    m.add_output(log);
  }
  spdlog::info("{} epochs, {} steps, best metric {:.6g} at epoch {}{}", result.epochs.size(), result.total_steps,
               result.best_metric, result.best_epoch, result.early_stopped ? " (early stop)" : "");
  write_manifest(m, g);
  return kOk;
}

// ---------------------------------------------------------------- embedding

enc::Model load_model(const std::string& path, cli::RunManifest& m) {
  require_file(path, "checkpoint");
  m.add_input(path);
  return enc::Model(load_checkpoint(path));
}

struct EmbedProteinsArgs {
  std::string checkpoint, proteins, out_proteins, out_pockets;
};

int run_embed_proteins(const EmbedProteinsArgs& a, const Global& g) {
  cli::RunManifest m("embed-proteins", g.argv);
  m.set_threads(g.threads);
  m.phase("load");
  const auto model = load_model(a.checkpoint, m);
  require_file(a.proteins, "protein file");
  m.add_input(a.proteins);
  const auto records = data::read_proteins(a.proteins);
  m.phase("embed");
  const auto stores = screen::embed_proteins(model, records, g.threads);
  m.phase("write");
  screen::write_store(a.out_proteins, stores.proteins);
  screen::write_store(a.out_pockets, stores.pockets);
  for (const auto& p : {a.out_proteins, a.out_pockets}) {
    m.add_output(p);
    m.add_output(screen::ids_path(p));
  }
  spdlog::info("embedded {} proteins into {} pockets", stores.proteins.rows(), stores.pockets.rows());
  write_manifest(m, g);
  return kOk;
}

struct EmbedLigandsArgs {
  std::string checkpoint, ligands, output;
};

int run_embed_ligands(const EmbedLigandsArgs& a, const Global& g) {
  cli::RunManifest m("embed-ligands", g.argv);
  m.phase("load");
  const auto model = load_model(a.checkpoint, m);
  require_file(a.ligands, "ligand feature file");
  m.add_input(a.ligands);
  const auto records = data::read_ligand_features(a.ligands);
  m.phase("embed");
  const auto store = screen::embed_ligands(model, records);
  m.phase("write");
  screen::write_store(a.output, store);
  m.add_output(a.output);
  m.add_output(screen::ids_path(a.output));
  spdlog::info("embedded {} ligands", store.rows());
  write_manifest(m, g);
  return kOk;
}

// ---------------------------------------------------------------- ranking

screen::EmbeddingStore load_store(const std::string& path, screen::StoreKind kind, cli::RunManifest& m) {
  require_file(path, "store");
  auto s = screen::read_store(path);
  if (s.kind != kind) {
    throw FormatError(path + " holds a " + screen::to_string(s.kind) + " store, expected " + screen::to_string(kind));
  }
  m.add_input(path);
  m.add_input(screen::ids_path(path));
  return s;
}

std::vector<double> half(const screen::EmbeddingStore& ligands, std::size_t row, bool second) {
  const auto full = screen::row_as_double(ligands, row);
  const std::size_t d = ligands.width / 2;
  return second ? std::vector<double>(full.begin() + static_cast<std::ptrdiff_t>(d), full.end())
                : std::vector<double>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(d));
}

struct RankArgs {
  std::string protein_store, ligand_store, pocket_store, output;
  std::vector<std::string> proteins, ligands;
  std::size_t top_k = 0;
};

int run_screen(const RankArgs& a, const Global& g) {
  cli::RunManifest m("screen", g.argv);
  m.set_threads(g.threads);
  m.phase("load");
  const auto prots = load_store(a.protein_store, screen::StoreKind::Protein, m);
  const auto ligs = load_store(a.ligand_store, screen::StoreKind::Ligand, m);
  m.phase("score");
  Output out(a.output);
  const auto& queries = a.proteins.empty() ? prots.ids : a.proteins;
  bool header = true;
  for (const auto& q : queries) {
    const auto query = screen::row_as_double(prots, screen::find_row(prots, q));
    screen::write_ranking_csv(out.stream(), q, screen::virtual_screen(ligs, query, a.top_k, g.threads), header);
    header = false;
  }
  out.close(m);
  write_manifest(m, g);
  return kOk;
}

int run_fish(const RankArgs& a, const Global& g) {
  cli::RunManifest m("fish", g.argv);
  m.set_threads(g.threads);
  m.phase("load");
  const auto prots = load_store(a.protein_store, screen::StoreKind::Protein, m);
  const auto ligs = load_store(a.ligand_store, screen::StoreKind::Ligand, m);
  m.phase("score");
  Output out(a.output);
  const auto& queries = a.ligands.empty() ? ligs.ids : a.ligands;
  bool header = true;
  for (const auto& q : queries) {
    const auto mp = half(ligs, screen::find_row(ligs, q), false);
    screen::write_ranking_csv(out.stream(), q, screen::target_fish(prots, mp, a.top_k, g.threads), header);
    header = false;
  }
  out.close(m);
  write_manifest(m, g);
  return kOk;
}

std::vector<std::string> pocket_proteins(const screen::EmbeddingStore& pockets) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& meta : pockets.pockets)
    if (seen.insert(meta.protein_id).second) out.push_back(meta.protein_id);
  return out;
}

int run_pockets(const RankArgs& a, const Global& g) {
  cli::RunManifest m("pockets", g.argv);
  m.phase("load");
  const auto pockets = load_store(a.pocket_store, screen::StoreKind::Pocket, m);
  m.phase("rank");
  Output out(a.output);
  const auto queries = a.proteins.empty() ? pocket_proteins(pockets) : a.proteins;
  bool header = true;
  for (const auto& q : queries) {
    screen::write_ranking_csv(out.stream(), q, screen::predict_pockets(pockets, q, a.top_k), header);
    header = false;
  }
  out.close(m);
  write_manifest(m, g);
  return kOk;
}

int run_select_pocket(const RankArgs& a, const Global& g) {
  cli::RunManifest m("select-pocket", g.argv);
  m.phase("load");
  const auto pockets = load_store(a.pocket_store, screen::StoreKind::Pocket, m);
  const auto ligs = load_store(a.ligand_store, screen::StoreKind::Ligand, m);
  if (a.proteins.size() != 1) throw UsageError("select-pocket needs exactly one --protein");
  m.phase("rank");
  Output out(a.output);
  const auto& queries = a.ligands.empty() ? ligs.ids : a.ligands;
  bool header = true;
  for (const auto& q : queries) {
    const auto mb = half(ligs, screen::find_row(ligs, q), true);
    screen::write_ranking_csv(out.stream(), q, screen::select_pocket_for_ligand(pockets, a.proteins[0], mb, a.top_k),
                              header);
    header = false;
  }
  out.close(m);
  write_manifest(m, g);
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string rankings, labels, task = "screen", group, output;
  std::string fractions = "0.01,0.05";
  bool missing_inactive = false;
  // structure-based evaluation
  std::string pocket_store, structures, ligand_store;
  double threshold = 4.0;
};

struct RankingRow {
  std::string id;
  double score;
};

std::map<std::string, std::vector<RankingRow>> read_rankings(const std::string& path) {
  require_file(path, "ranking file");
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || (line != "query,rank,id,score" && line != "query,rank,id,score\r")) {
    throw FormatError(path + ": expected header query,rank,id,score");
  }
  std::map<std::string, std::vector<RankingRow>> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "query,rank,id,score") continue;  // concatenated files
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 4) throw FormatError(path + ":" + std::to_string(lineno) + ": expected 4 columns");
    double score = 0.0;
    try {
      std::size_t used = 0;
      score = std::stod(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument(f[3]);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": invalid score '" + f[3] + "'");
    }
    out[f[0]].push_back({f[2], score});
  }
  return out;
}

std::map<std::string, std::string> read_group_map(const std::string& path) {
  require_file(path, "group map");
  std::ifstream in(path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected <target>\\t<group>");
    }
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

std::string percent_label(double x) {
  return "EF@" + data::format_double(x * 100.0) + "%";
}

void eval_rankings(const EvalArgs& a, std::vector<metrics::ReportRow>& rows, cli::RunManifest& m) {
  if (a.task != "screen" && a.task != "fish") throw UsageError("--task must be screen or fish");
  if (a.labels.empty()) throw UsageError("ranking evaluation needs --labels");
  const auto rankings = read_rankings(a.rankings);
  m.add_input(a.rankings);
  require_file(a.labels, "label file");
  m.add_input(a.labels);
  std::map<std::pair<std::string, std::string>, int> label;
  for (const auto& r : data::read_activities(a.labels)) label[{r.protein_id, r.ligand_id}] = r.label;
  const auto fractions = parse_list(a.fractions);
  for (double x : fractions)
    if (!(x > 0.0 && x <= 1.0)) throw UsageError("enrichment fractions must lie in (0, 1]");

  std::map<std::string, std::map<std::string, double>> per_metric;  // metric -> target -> value
  std::vector<std::string> metric_order{"AUROC", "BEDROC85", "dAUPRC"};
  for (double x : fractions) metric_order.push_back(percent_label(x));

  for (const auto& [query, items] : rankings) {
    metrics::RankedEval e;
    std::size_t unlabelled = 0;
    for (const auto& it : items) {
      const auto key = a.task == "screen" ? std::make_pair(query, it.id) : std::make_pair(it.id, query);
      const auto found = label.find(key);
      if (found == label.end() && !a.missing_inactive) {
        ++unlabelled;
        continue;
      }
      e.scores.push_back(it.score);
      e.labels.push_back(found != label.end() && found->second ? 1 : 0);
      e.ids.push_back(it.id);
    }
    if (unlabelled) spdlog::debug("{}: {} unlabelled items skipped", query, unlabelled);
    const std::size_t pos = e.positives();
    if (pos == 0 || pos == e.scores.size()) {
      spdlog::warn("{}: needs both actives and inactives; skipped", query);
      continue;
    }
    per_metric["AUROC"][query] = metrics::auroc(e);
    per_metric["BEDROC85"][query] = metrics::bedroc(e, 85.0);
    per_metric["dAUPRC"][query] = metrics::delta_auprc(e);
    for (double x : fractions) per_metric[percent_label(x)][query] = metrics::enrichment_factor(e, x);
  }

  std::map<std::string, std::string> group;
  if (!a.group.empty()) {
    group = read_group_map(a.group);
    m.add_input(a.group);
  }
  for (const auto& metric : metric_order) {
    const auto it = per_metric.find(metric);
    if (it == per_metric.end()) continue;
    const auto values = a.group.empty() ? it->second : metrics::group_average(it->second, group);
    double sum = 0.0;
    for (const auto& [target, v] : values) {
      rows.push_back({a.task, target, metric, v});
      sum += v;
    }
    rows.push_back({a.task, "ALL", metric, sum / static_cast<double>(values.size())});
  }
}

void eval_structures(const EvalArgs& a, std::vector<metrics::ReportRow>& rows, cli::RunManifest& m) {
  if (a.structures.empty()) throw UsageError("pocket evaluation needs --structures");
  const auto pockets = load_store(a.pocket_store, screen::StoreKind::Pocket, m);
  require_file(a.structures, "structure file");
  m.add_input(a.structures);
  const auto proteins = data::read_proteins(a.structures);

  std::vector<metrics::ProteinSites> cases;
  std::vector<std::string> ids;
  std::map<std::string, std::vector<metrics::TrueSite>> sites_of;  // protein -> sites
  std::map<std::string, std::vector<std::string>> site_ligands;
  for (const auto& p : proteins) {
    const auto g = prot::build_graph(p);
    metrics::ProteinSites ps;
    for (const auto& s : p.sites) {
      try {
        const auto ann = prot::compute_site_center(s.ligand_atoms, g.coords);
        ps.sites.push_back({ann.center, s.ligand_atoms});
        site_ligands[p.id].push_back(s.ligand_id);
      } catch (const prot::NoContactResidues& e) {
        spdlog::warn("{}: site of '{}' skipped: {}", p.id, s.ligand_id, e.what());
      }
    }
    if (ps.sites.empty()) continue;
    for (std::size_t r = 0; r < pockets.rows(); ++r) {
      if (pockets.pockets[r].protein_id == p.id) ps.predictions.push_back({pockets.pockets[r].center, pockets.pockets[r].confidence});
    }
    if (ps.predictions.empty()) spdlog::warn("{}: no predicted pockets", p.id);
    sites_of[p.id] = ps.sites;
    ids.push_back(p.id);
    cases.push_back(std::move(ps));
  }
  if (cases.empty()) throw FormatError(a.structures + ": no proteins with usable binding sites");

  const std::string thr = data::format_double(a.threshold);
  for (auto [mode, name] : {std::pair{metrics::SiteMode::DCC, "DCC"}, std::pair{metrics::SiteMode::DCA, "DCA"}}) {
    const std::string metric = std::string(name) + "@" + thr;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      rows.push_back({"pockets", ids[i], metric, metrics::site_success_rates({cases[i]}, a.threshold, mode).value()});
    }
    rows.push_back({"pockets", "ALL", metric, metrics::site_success_rates(cases, a.threshold, mode).value()});
  }

  if (a.ligand_store.empty()) return;
  const auto ligs = load_store(a.ligand_store, screen::StoreKind::Ligand, m);
  std::vector<metrics::SelectionCase> sel;
  for (const auto& id : ids) {
    const auto& sites = sites_of[id];
    const auto& ligand_ids = site_ligands[id];
    std::set<std::string> done;
    for (const auto& lig : ligand_ids) {
      if (!done.insert(lig).second) continue;
      const auto row = std::find(ligs.ids.begin(), ligs.ids.end(), lig);
      if (row == ligs.ids.end()) continue;
      const auto mb = half(ligs, static_cast<std::size_t>(row - ligs.ids.begin()), true);
      const auto top = screen::select_pocket_for_ligand(pockets, id, mb, 1);
      metrics::SelectionCase c;
      c.top_pocket = pockets.pockets[top.front().row].center;
      for (std::size_t s = 0; s < sites.size(); ++s)
        if (ligand_ids[s] == lig) c.sites.push_back(sites[s]);
      sel.push_back(std::move(c));
    }
  }
  if (sel.empty()) {
    spdlog::warn("no site ligand found in {}; selection not evaluated", a.ligand_store);
    return;
  }
  rows.push_back({"selection", "ALL", "DCC@" + thr, metrics::pocket_selection_success(sel, a.threshold).value()});
}

int run_eval(const EvalArgs& a, const Global& g) {
  cli::RunManifest m("eval", g.argv);
  if (a.rankings.empty() && a.pocket_store.empty()) throw UsageError("eval needs --rankings or --pocket-store");
  m.phase("evaluate");
  std::vector<metrics::ReportRow> rows;
  if (!a.rankings.empty()) eval_rankings(a, rows, m);
  if (!a.pocket_store.empty()) eval_structures(a, rows, m);
  m.phase("write");
  Output out(a.output);
  metrics::write_report_csv(out.stream(), rows);
  out.close(m);
  write_manifest(m, g);
  return kOk;
}

// ---------------------------------------------------------------- bench-score

struct BenchArgs {
  std::size_t rows = 1000000, width = 256, top_k = 0, repeats = 3;
  std::string shards = "1,2,4";
  std::string output;
};

int run_bench_score(const BenchArgs& a, const Global& g) {
  cli::RunManifest m("bench-score", g.argv);
  m.set_seed(g.seed);
  if (a.rows == 0 || a.width == 0 || a.repeats == 0) throw UsageError("rows, width and repeats must be positive");
  std::vector<std::size_t> shard_counts;
  for (double s : parse_list(a.shards)) {
    if (!(s >= 1) || s != std::floor(s)) throw UsageError("shard counts must be positive integers");
    shard_counts.push_back(static_cast<std::size_t>(s));
  }

  m.phase("generate");
  std::mt19937_64 rng(g.seed);
  std::normal_distribution<float> nd;
  screen::EmbeddingStore store;
  store.kind = screen::StoreKind::Ligand;
  store.width = a.width;
  store.data.resize(a.rows * a.width);
  for (float& v : store.data) v = nd(rng);
  store.ids.resize(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) store.ids[i] = "L" + std::to_string(i);
  std::vector<double> query(a.width);
  for (double& v : query) v = nd(rng);

  auto time_rank = [&](std::size_t shards, std::vector<screen::Ranked>& result) {
    double best = 1e300;
    for (std::size_t r = 0; r < a.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      result = screen::rank_by_cosine(store, query, 0, a.top_k, shards, shards);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };

  m.phase("score");
  std::vector<screen::Ranked> reference;
  const double ref_time = time_rank(1, reference);
  Output out(a.output);
  auto& os = out.stream();
  os << "shards,threads,rows,width,seconds,rows_per_second,speedup,identical\n";
  os << "reference,1," << a.rows << ',' << a.width << ',' << data::format_double(ref_time) << ','
     << data::format_double(static_cast<double>(a.rows) / ref_time) << ",1,true\n";
  bool all_identical = true;
  for (std::size_t s : shard_counts) {
    std::vector<screen::Ranked> got;
    const double t = time_rank(s, got);
    const bool same = got == reference;
    all_identical = all_identical && same;
    os << s << ',' << s << ',' << a.rows << ',' << a.width << ',' << data::format_double(t) << ','
       << data::format_double(static_cast<double>(a.rows) / t) << ',' << data::format_double(ref_time / t) << ','
       << (same ? "true" : "false") << '\n';
    spdlog::info("{} shard(s): {:.3f} s, {:.3g} rows/s, speedup {:.2f}{}", s, t, static_cast<double>(a.rows) / t,
                 ref_time / t, same ? "" : ", RANKING DIFFERS");
  }
  out.close(m);
  write_manifest(m, g);
  if (!all_identical) throw NumericError("sharded ranking differs from the reference ranking");
  return kOk;
}

int dispatch(int argc, char** argv) {
  Global g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);

  CLI::App app{"conglude: pocket-aware contrastive screening on CPU"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Scoring shards / worker threads (1 = reference path)")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}));
  app.add_option("--manifest", g.manifest, "Run manifest path (default: <first output>.manifest.json)");

  FeaturizeArgs fa;
  auto* featurize = app.add_subcommand("featurize", "SMILES file -> ligand feature file");
  featurize->add_option("-i,--input", fa.input, "Tab-separated <id> <SMILES> file")->required();
  featurize->add_option("-o,--output", fa.output, "Feature file to write")->required();
  featurize->add_option("--radius", fa.radius, "Fingerprint radius")->capture_default_str()->check(CLI::Range(0, 8));
  featurize->add_option("--width", fa.width, "Folded fingerprint width (power of two)")->capture_default_str();
  featurize->add_option("--stats-in", fa.stats_in, "Descriptor mean/scale JSON to apply");
  featurize->add_option("--stats-out", fa.stats_out, "Write the descriptor mean/scale JSON used");
  featurize->add_flag("--skip-invalid", fa.skip_invalid, "Skip unparsable SMILES instead of failing");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a planted-pocket dataset");
  synth->add_option("-o,--out-dir", sa.out_dir, "Output directory")->required();
  synth->add_option("--proteins", sa.cfg.n_proteins, "Number of proteins")->capture_default_str();
  synth->add_option("--residues", sa.cfg.residues_per_protein, "Residues per protein")->capture_default_str();
  synth->add_option("--sites", sa.cfg.n_sites, "Planted sites per protein")->capture_default_str();
  synth->add_option("--ligands", sa.cfg.n_ligands, "Number of ligands")->capture_default_str();
  synth->add_option("--residue-dim", sa.cfg.residue_feature_dim, "Residue feature width")->capture_default_str();
  synth->add_option("--ligand-dim", sa.cfg.ligand_feature_dim, "Ligand feature width")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model; flags override config paths");
  train->add_option("-c,--config", ta.config, "key = value config file");
  train->add_option("--proteins", ta.proteins, "Protein JSON(L) file");
  train->add_option("--ligands", ta.ligands, "Ligand feature file");
  train->add_option("--activities", ta.activities, "Activity labels (protein, ligand, 0/1)");
  train->add_option("--val-proteins", ta.val_proteins, "Validation protein file");
  train->add_option("--val-activities", ta.val_activities, "Validation activity labels");
  train->add_option("--checkpoint", ta.checkpoint, "Checkpoint to write");
  train->add_option("--log", ta.log, "Per-epoch JSON lines log");
  auto* max_steps = train->add_option("--max-steps", ta.max_steps, "Stop after this many steps");

  EmbedProteinsArgs ea;
  auto* embp = app.add_subcommand("embed-proteins", "Protein and pocket embedding stores");
  embp->add_option("--checkpoint", ea.checkpoint)->required();
  embp->add_option("--proteins", ea.proteins, "Protein JSON(L) file")->required();
  embp->add_option("--out-proteins", ea.out_proteins, "Protein store to write")->required();
  embp->add_option("--out-pockets", ea.out_pockets, "Pocket store to write")->required();

  EmbedLigandsArgs la;
  auto* embl = app.add_subcommand("embed-ligands", "Ligand embedding store");
  embl->add_option("--checkpoint", la.checkpoint)->required();
  embl->add_option("--ligands", la.ligands, "Ligand feature file")->required();
  embl->add_option("-o,--output", la.output, "Ligand store to write")->required();

  RankArgs sc, fi, po, se;
  auto* scr = app.add_subcommand("screen", "Rank ligands for proteins (CSV)");
  scr->add_option("--protein-store", sc.protein_store)->required();
  scr->add_option("--ligand-store", sc.ligand_store)->required();
  scr->add_option("--protein", sc.proteins, "Query protein id (repeatable; default all)");
  scr->add_option("--top-k", sc.top_k, "Rows per query (0 = all)")->capture_default_str();
  scr->add_option("-o,--output", sc.output, "CSV path (default stdout)");

  auto* fish = app.add_subcommand("fish", "Rank proteins for ligands (CSV)");
  fish->add_option("--protein-store", fi.protein_store)->required();
  fish->add_option("--ligand-store", fi.ligand_store)->required();
  fish->add_option("--ligand", fi.ligands, "Query ligand id (repeatable; default all)");
  fish->add_option("--top-k", fi.top_k, "Rows per query (0 = all)")->capture_default_str();
  fish->add_option("-o,--output", fi.output, "CSV path (default stdout)");

  auto* pock = app.add_subcommand("pockets", "Rank a protein's pockets by confidence (CSV)");
  pock->add_option("--pocket-store", po.pocket_store)->required();
  pock->add_option("--protein", po.proteins, "Protein id (repeatable; default all)");
  pock->add_option("--top-k", po.top_k, "Rows per query (0 = all)")->capture_default_str();
  pock->add_option("-o,--output", po.output, "CSV path (default stdout)");

  auto* sel = app.add_subcommand("select-pocket", "Rank a protein's pockets for ligands (CSV)");
  sel->add_option("--pocket-store", se.pocket_store)->required();
  sel->add_option("--ligand-store", se.ligand_store)->required();
  sel->add_option("--protein", se.proteins, "Protein id")->required();
  sel->add_option("--ligand", se.ligands, "Ligand id (repeatable; default all)");
  sel->add_option("--top-k", se.top_k, "Rows per query (0 = all)")->capture_default_str();
  sel->add_option("-o,--output", se.output, "CSV path (default stdout)");

  EvalArgs va;
  auto* ev = app.add_subcommand("eval", "Metric report CSV from rankings and/or pocket stores");
  ev->add_option("--rankings", va.rankings, "Ranking CSV from screen or fish");
  ev->add_option("--labels", va.labels, "Activity labels (protein, ligand, 0/1)");
  ev->add_option("--task", va.task, "screen (query = protein) or fish (query = ligand)")->capture_default_str();
  ev->add_option("--fractions", va.fractions, "Enrichment fractions, comma separated")->capture_default_str();
  ev->add_option("--group", va.group, "Tab-separated <target> <group> map; metrics averaged per group");
  ev->add_flag("--missing-inactive", va.missing_inactive, "Treat unlabelled ranked items as inactive");
  ev->add_option("--pocket-store", va.pocket_store, "Pocket store for DCC/DCA");
  ev->add_option("--structures", va.structures, "Protein file with true sites");
  ev->add_option("--ligand-store", va.ligand_store, "Ligand store; adds pocket selection success");
  ev->add_option("--threshold", va.threshold, "Success distance in Angstrom")->capture_default_str();
  ev->add_option("-o,--output", va.output, "CSV path (default stdout)");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench-score", "Time cosine scanning of random ligand rows");
  bench->add_option("--rows", ba.rows)->capture_default_str();
  bench->add_option("--width", ba.width)->capture_default_str();
  bench->add_option("--shards", ba.shards, "Shard counts to compare with the reference")->capture_default_str();
  bench->add_option("--top-k", ba.top_k, "Rows kept (0 = full ranking)")->capture_default_str();
  bench->add_option("--repeats", ba.repeats, "Best-of repeats")->capture_default_str();
  bench->add_option("-o,--output", ba.output, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  ta.seed_given = app.count("--seed") > 0;
  ta.max_steps_given = max_steps->count() > 0;

  if (*featurize) return run_featurize(fa, g);
  if (*synth) return run_synth(sa, g);
  if (*train) return run_train(ta, g);
  if (*embp) return run_embed_proteins(ea, g);
  if (*embl) return run_embed_ligands(la, g);
  if (*scr) return run_screen(sc, g);
  if (*fish) return run_fish(fi, g);
  if (*pock) return run_pockets(po, g);
  if (*sel) return run_select_pocket(se, g);
  if (*ev) return run_eval(va, g);
  if (*bench) return run_bench_score(ba, g);
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  try {
    return dispatch(argc, argv);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const ContractError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return kNumeric;
  } catch (const FormatError& e) {
    spdlog::error("{}", e.what());
    return kDataFormat;
  } catch (const ShapeError& e) {
    spdlog::error("{}", e.what());
    return kDataFormat;
  } catch (const mol::ParseError& e) {
    spdlog::error("{}", e.what());
    return kDataFormat;
  } catch (const prot::NoContactResidues& e) {
    spdlog::error("{}", e.what());
    return kDataFormat;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kDataFormat;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kInternal;
  }
}
