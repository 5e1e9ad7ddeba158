#include "mlatmi/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mlatmi/errors.hpp"

namespace mlatmi::io {

void write_meta(std::ostream& os, const OutputMeta& meta) {
  os << "# mlatmi " << meta.kind << " v" << kFormatVersion << '\n';
  os << "# config_hash=" << meta.config_hash << " seed=" << meta.seed << '\n';
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_visibility(std::ostream& os, const env::VisibilityTable& vis, const env::GridMap& grid) {
  os << "cell,x,y,R,mask\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    os << i << ',' << format_double(grid.cell(i).x()) << ',' << format_double(grid.cell(i).y()) << ','
       << vis.count(i) << ',' << vis.masks[i] << '\n';
  }
}

void write_grid(std::ostream& os, const env::GridMap& grid) {
  os << "cell,x,y\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    os << i << ',' << format_double(grid.cell(i).x()) << ',' << format_double(grid.cell(i).y()) << '\n';
  }
}

void write_measurements(std::ostream& os, const measure::MeasurementSet& set) {
  os << "# measurement_seed=" << set.seed << " noise=" << measure::to_string(set.noise.kind)
     << " sigma_r=" << format_double(set.noise.sigma) << " realizations=" << set.realizations << '\n';
  os << "cell,realization";
  for (std::size_t j = 0; j < set.refs; ++j) os << ",m" << (j + 1);
  os << '\n';
  for (std::size_t i = 0; i < set.cells; ++i) {
    for (std::size_t o = 0; o < set.realizations; ++o) {
      os << i << ',' << o;
      for (double v : set.row(i, o)) os << ',' << format_double(v);
      os << '\n';
    }
  }
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw IoError("malformed number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw IoError("malformed number '" + s + "'");
  }
}

std::string meta_value(const std::string& line, const std::string& key) {
  const auto pos = line.find(key + "=");
  if (pos == std::string::npos) return {};
  const auto start = pos + key.size() + 1;
  return line.substr(start, line.find(' ', start) - start);
}

}  // namespace

measure::MeasurementSet read_measurements(std::istream& is) {
  measure::MeasurementSet set;
  std::string line;
  bool have_meta = false;
  std::vector<std::vector<double>> rows;
  std::size_t max_cell = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("measurement_seed=") != std::string::npos) {
        set.seed = std::stoull(meta_value(line, "measurement_seed"));
        set.noise.kind = measure::parse_noise_kind(meta_value(line, "noise"));
        set.noise.sigma = parse_double(meta_value(line, "sigma_r"));
        set.realizations = std::stoull(meta_value(line, "realizations"));
        have_meta = true;
      }
      continue;
    }
    if (line.rfind("cell,", 0) == 0) {
      set.refs = split(line, ',').size() - 2;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != set.refs + 2) throw IoError("measurement row has the wrong number of columns");
    std::vector<double> row;
    for (std::size_t j = 2; j < fields.size(); ++j) row.push_back(parse_double(fields[j]));
    max_cell = std::max<std::size_t>(max_cell, std::stoull(fields[0]));
    rows.push_back(std::move(row));
  }
  if (!have_meta || set.realizations == 0) throw IoError("measurement file lacks its header");
  set.cells = max_cell + 1;
  if (rows.size() != set.cells * set.realizations) throw IoError("measurement file is truncated");
  set.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(set.refs));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < set.refs; ++j) set.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
  }
  return set;
}

void write_trace(std::ostream& os, const mine::MineTrace& trace) {
  os << "epoch,I_N,lr\n";
  for (std::size_t e = 0; e < trace.size(); ++e) {
    os << (trace.first_epoch + e) << ',' << format_double(trace.values[e]) << ',' << format_double(trace.lrs[e]) << '\n';
  }
}

mine::MineTrace read_trace(std::istream& is) {
  mine::MineTrace trace;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 3) throw IoError("trace row must have 3 columns");
    if (first) {
      trace.first_epoch = std::stoull(fields[0]);
      first = false;
    }
    trace.values.push_back(parse_double(fields[1]));
    trace.lrs.push_back(parse_double(fields[2]));
  }
  return trace;
}

std::string estimate_record(const mi::MiEstimate& est, const OutputMeta& meta, bool bits) {
  nlohmann::ordered_json j;
  j["format"] = "mlatmi-estimate";
  j["version"] = kFormatVersion;
  j["kind"] = meta.kind;
  j["method"] = mi::to_string(est.method);
  j["unit"] = bits ? "bits" : "nats";
  j["value"] = bits ? mi::nats_to_bits(est.value) : est.value;
  j["standard_error"] = bits ? mi::nats_to_bits(est.standard_error()) : est.standard_error();
  j["placement_id"] = est.placement_id;
  j["seed"] = est.seed;
  j["realizations"] = est.realizations;
  j["master_seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  return j.dump(2) + "\n";
}

}  // namespace mlatmi::io
