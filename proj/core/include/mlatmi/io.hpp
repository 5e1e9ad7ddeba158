#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "mlatmi/env.hpp"
#include "mlatmi/measure.hpp"
#include "mlatmi/mi_mc.hpp"
#include "mlatmi/mine.hpp"

namespace mlatmi::io {

inline constexpr int kFormatVersion = 1;

// Provenance written as '#' comment lines ahead of every CSV payload.
struct OutputMeta {
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
};

void write_meta(std::ostream& os, const OutputMeta& meta);

// %.17g, "nan"/"inf" for non-finite values.
std::string format_double(double v);

std::string fnv1a_hex(std::string_view data);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// cell,x,y,R,mask
void write_visibility(std::ostream& os, const env::VisibilityTable& vis, const env::GridMap& grid);

// cell,x,y
void write_grid(std::ostream& os, const env::GridMap& grid);

// Header comments record seed, noise kind and sigma; columns
// cell,realization,m1..mL.
void write_measurements(std::ostream& os, const measure::MeasurementSet& set);
measure::MeasurementSet read_measurements(std::istream& is);

// epoch,I_N,lr
void write_trace(std::ostream& os, const mine::MineTrace& trace);
mine::MineTrace read_trace(std::istream& is);

// Structured estimate record (JSON).
std::string estimate_record(const mi::MiEstimate& est, const OutputMeta& meta, bool bits);

}  // namespace mlatmi::io
