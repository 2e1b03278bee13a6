#pragma once

// Plain CSV output: comma separated, '.' decimals, '\n' line endings,
// shortest round-trip number formatting. Files are written as <name>.partial
// and renamed on commit().

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vegdyn/analysis.hpp"
#include "vegdyn/gke.hpp"
#include "vegdyn/meanfield.hpp"
#include "vegdyn/model.hpp"
#include "vegdyn/qsd.hpp"
#include "vegdyn/ssa.hpp"

namespace vegdyn::csv {

// Shortest representation that parses back to v; NaN becomes an empty field.
std::string format(double v);

class Writer {
 public:
  Writer(std::filesystem::path path, const std::vector<std::string>& header);
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;
  ~Writer();

  Writer& operator<<(double v);
  Writer& operator<<(std::size_t v);
  Writer& operator<<(long long v);
  Writer& operator<<(int v) { return *this << static_cast<long long>(v); }
  Writer& operator<<(std::string_view v);
  Writer& operator<<(const std::string& v) { return *this << std::string_view(v); }
  Writer& operator<<(const char* v) { return *this << std::string_view(v); }
  void end_row();

  // Flushes and renames <path>.partial to <path>.
  void commit();
  const std::filesystem::path& path() const { return path_; }

 private:
  void separator();

  std::filesystem::path path_;
  std::filesystem::path partial_;
  std::ofstream out_;
  std::size_t columns_ = 0;
  std::size_t in_row_ = 0;
  bool committed_ = false;
};

std::vector<std::string> read_lines(const std::filesystem::path& path);

void write_events(const std::filesystem::path& path, const ssa::Trajectory& traj, const StateSet& states);
void write_snapshots(const std::filesystem::path& path, std::span<const ssa::Snapshot> snapshots,
                     std::span<const Location> positions, const StateSet& states);
void write_fields(const std::filesystem::path& path, std::span<const gke::ProbabilityField> fields,
                  const gke::Grid& grid, const StateSet& states);
void write_occupancy(const std::filesystem::path& path, const meanfield::Occupancy& occ, const StateSet& states);
void write_qsd_sweep(const std::filesystem::path& path, const qsd::Sweep& sweep);
void write_qsd_vectors(const std::filesystem::path& path, const qsd::Sweep& sweep);
void write_branches(const std::filesystem::path& path, std::span<const analysis::EquilibriumPoint> points);

}  // namespace vegdyn::csv
