#include "conglude/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "conglude/errors.hpp"

namespace conglude::data {

using nlohmann::json;

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(std::string_view tok, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError(where + ": invalid number '" + std::string(tok) + "'");
  }
  return v;
}

prot::Vec3 vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw FormatError(what + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

prot::ProteinRecord protein_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("protein JSON: ") + e.what());
  }
  prot::ProteinRecord p;
  try {
    p.id = j.at("id").get<std::string>();
    const auto& residues = j.at("residues");
    if (!residues.is_array() || residues.empty()) throw FormatError("protein '" + p.id + "' has no residues");
    const std::size_t width = residues[0].at("feat").size();
    p.features = Tensor::matrix(residues.size(), width);
    for (std::size_t i = 0; i < residues.size(); ++i) {
      p.coords.push_back(vec3(residues[i].at("xyz"), "residue xyz"));
      const auto& feat = residues[i].at("feat");
      if (feat.size() != width) throw FormatError("protein '" + p.id + "': ragged residue features");
      for (std::size_t k = 0; k < width; ++k) p.features(i, k) = feat[k].get<double>();
    }
    if (j.contains("sites")) {
      for (const auto& s : j.at("sites")) {
        prot::SiteRecord site;
        site.ligand_id = s.at("ligand_id").get<std::string>();
        for (const auto& a : s.at("ligand_atoms")) site.ligand_atoms.push_back(vec3(a, "ligand atom"));
        p.sites.push_back(std::move(site));
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("protein JSON: ") + e.what());
  }
  return p;
}

std::vector<prot::ProteinRecord> read_proteins(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<prot::ProteinRecord> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return out;
  if (text[first] == '[') {
    json arr;
    try {
      arr = json::parse(text);
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    for (const auto& item : arr) out.push_back(protein_from_json(item.dump()));
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (skip_line(line)) continue;
    out.push_back(protein_from_json(line));
  }
  return out;
}

std::string protein_to_json_line(const prot::ProteinRecord& p) {
  // Hand-written so doubles use the shortest round-trip representation.
  std::string s = "{\"id\":" + json(p.id).dump() + ",\"residues\":[";
  for (std::size_t i = 0; i < p.coords.size(); ++i) {
    if (i) s += ',';
    s += "{\"xyz\":[" + format_double(p.coords[i][0]) + "," + format_double(p.coords[i][1]) + "," +
         format_double(p.coords[i][2]) + "],\"feat\":[";
    for (std::size_t k = 0; k < p.features.cols(); ++k) {
      if (k) s += ',';
      s += format_double(p.features(i, k));
    }
    s += "]}";
  }
  s += "],\"sites\":[";
  for (std::size_t t = 0; t < p.sites.size(); ++t) {
    if (t) s += ',';
    s += "{\"ligand_id\":" + json(p.sites[t].ligand_id).dump() + ",\"ligand_atoms\":[";
    for (std::size_t a = 0; a < p.sites[t].ligand_atoms.size(); ++a) {
      if (a) s += ',';
      const auto& x = p.sites[t].ligand_atoms[a];
      s += "[" + format_double(x[0]) + "," + format_double(x[1]) + "," + format_double(x[2]) + "]";
    }
    s += "]}";
  }
  s += "]}";
  return s;
}

void write_proteins(const std::filesystem::path& path, const std::vector<prot::ProteinRecord>& proteins) {
  auto out = open_output(path);
  for (const auto& p : proteins) out << protein_to_json_line(p) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<LigandSmiles> read_ligand_smiles(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<LigandSmiles> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (skip_line(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected '<id>\\t<SMILES>'");
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

std::vector<LigandRecord> read_ligand_features(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<LigandRecord> out;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (skip_line(line)) continue;
    std::istringstream tokens(line);
    LigandRecord rec;
    tokens >> rec.id;
    std::string tok;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    while (tokens >> tok) rec.features.push_back(parse_double(tok, where));
    if (rec.features.empty()) throw FormatError(where + ": no feature values");
    if (width == 0) width = rec.features.size();
    if (rec.features.size() != width) {
      throw FormatError(where + ": expected " + std::to_string(width) + " values, got " +
                        std::to_string(rec.features.size()));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_ligand_features(const std::filesystem::path& path, const std::vector<LigandRecord>& ligands) {
  auto out = open_output(path);
  for (const auto& l : ligands) {
    out << l.id;
    for (double v : l.features) out << ' ' << format_double(v);
    out << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<ActivityRecord> read_activities(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<ActivityRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (skip_line(line)) continue;
    std::istringstream tokens(line);
    ActivityRecord rec;
    std::string label;
    if (!(tokens >> rec.protein_id >> rec.ligand_id >> label) || (label != "0" && label != "1")) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected '<protein_id>\\t<ligand_id>\\t<0|1>'");
    }
    rec.label = label == "1" ? 1 : 0;
    out.push_back(std::move(rec));
  }
  return out;
}

void write_activities(const std::filesystem::path& path, const std::vector<ActivityRecord>& records) {
  auto out = open_output(path);
  for (const auto& r : records) out << r.protein_id << '\t' << r.ligand_id << '\t' << r.label << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace conglude::data
