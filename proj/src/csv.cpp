#include "vegdyn/csv.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

#include "vegdyn/errors.hpp"

namespace vegdyn::csv {

std::string format(double v) {
  if (std::isnan(v)) return {};
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Writer::Writer(std::filesystem::path path, const std::vector<std::string>& header)
    : path_(std::move(path)), partial_(path_.string() + ".partial"), columns_(header.size()) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(partial_, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open " + partial_.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

Writer::~Writer() {
  if (!committed_ && out_.is_open()) out_.close();  // leave the .partial file behind
}

void Writer::separator() {
  if (in_row_++) out_ << ',';
}

Writer& Writer::operator<<(double v) {
  separator();
  out_ << format(v);
  return *this;
}

Writer& Writer::operator<<(std::size_t v) {
  separator();
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out_.write(buf, res.ptr - buf);
  return *this;
}

Writer& Writer::operator<<(long long v) {
  separator();
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out_.write(buf, res.ptr - buf);
  return *this;
}

Writer& Writer::operator<<(std::string_view v) {
  separator();
  out_ << v;
  return *this;
}

void Writer::end_row() {
  if (in_row_ != columns_)
    throw std::logic_error("csv row has " + std::to_string(in_row_) + " fields, header has " +
                           std::to_string(columns_));
  out_ << '\n';
  in_row_ = 0;
}

void Writer::commit() {
  if (committed_) return;
  out_.flush();
  if (!out_) throw std::runtime_error("write to " + partial_.string() + " failed");
  out_.close();
  std::filesystem::rename(partial_, path_);
  committed_ = true;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

void write_events(const std::filesystem::path& path, const ssa::Trajectory& traj, const StateSet& states) {
  Writer w(path, {"t", "site", "from", "to"});
  for (const auto& e : traj.events) {
    w << e.t << e.site << states.label(e.from) << states.label(e.to);
    w.end_row();
  }
  w.commit();
}

void write_snapshots(const std::filesystem::path& path, std::span<const ssa::Snapshot> snapshots,
                     std::span<const Location> positions, const StateSet& states) {
  Writer w(path, {"t", "site", "pos", "state"});
  for (const auto& s : snapshots)
    for (std::size_t i = 0; i < s.states.size(); ++i) {
      w << s.t << i << positions[i] << states.label(s.states[i]);
      w.end_row();
    }
  w.commit();
}

void write_fields(const std::filesystem::path& path, std::span<const gke::ProbabilityField> fields,
                  const gke::Grid& grid, const StateSet& states) {
  std::vector<std::string> header{"t", "node", "pos"};
  for (const auto& l : states.labels()) header.push_back("P_" + l);
  Writer w(path, header);
  for (const auto& f : fields)
    for (std::size_t i = 0; i < f.nodes(); ++i) {
      w << f.t << i << grid.nodes[i];
      for (std::size_t s = 0; s < f.states; ++s) w << f.at(i, s);
      w.end_row();
    }
  w.commit();
}

void write_occupancy(const std::filesystem::path& path, const meanfield::Occupancy& occ, const StateSet& states) {
  Writer w(path, {"t", "state", "frequency", "stderr"});
  for (std::size_t t = 0; t < occ.times.size(); ++t)
    for (std::size_t s = 0; s < occ.state_count; ++s) {
      w << occ.times[t] << states.label(s) << occ.freq(t, s) << occ.se(t, s);
      w.end_row();
    }
  w.commit();
}

void write_qsd_sweep(const std::filesystem::path& path, const qsd::Sweep& sweep) {
  Writer w(path, {"N", "jbar", "rho"});
  for (const auto& r : sweep.rows) {
    w << r.n << r.jbar << r.result.rho;
    w.end_row();
  }
  w.commit();
}

void write_qsd_vectors(const std::filesystem::path& path, const qsd::Sweep& sweep) {
  Writer w(path, {"N", "jbar", "grass_fraction", "mass"});
  for (const auto& r : sweep.rows)
    for (std::size_t i = 0; i < r.result.qsd.size(); ++i) {
      w << r.n << r.jbar << qsd::grass_fraction(r.n, i) << r.result.qsd[i];
      w.end_row();
    }
  w.commit();
}

void write_branches(const std::filesystem::path& path, std::span<const analysis::EquilibriumPoint> points) {
  Writer w(path, {"jbar", "grass", "stability", "kind"});
  for (const auto& p : points) {
    w << p.jbar << p.grass << analysis::to_string(p.stability) << analysis::to_string(p.kind);
    w.end_row();
  }
  w.commit();
}

}  // namespace vegdyn::csv
