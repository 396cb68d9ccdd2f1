#pragma once
// Deterministic artifact serialization: every JSON and CSV writer here emits
// byte-identical output for identical inputs (sorted JSON keys, shortest
// round-trip doubles in JSON, %.17g in CSV), which is what makes fixed-seed
// reruns diffable.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relic/analysis.hpp"
#include "relic/errors.hpp"

namespace relic::io {

// Round-trip-exact decimal form for CSV cells.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    require(!ec, errc::usage, "cannot create output directory: " + p.parent_path().string());
  }
  std::ofstream out(p, std::ios::binary);
  require(out.good(), errc::usage, "cannot open for writing: " + path);
  out << content;
  require(out.good(), errc::usage, "write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::usage, "cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Pretty-printed with a trailing newline; nlohmann objects keep keys sorted,
// so the bytes are a pure function of the value.
inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ------------------------------------------------------------- sweep CSVs

inline std::string approx_sweep_csv(const analysis::ApproxSweepResult& r) {
  std::string out = "delta,sup_err,L_T,m_T,ell,kappa_obs\n";
  for (const analysis::ApproxPoint& p : r.points) {
    out += fmt_g17(p.delta) + "," + fmt_g17(p.sup_err) + "," + std::to_string(p.blocks) + "," +
           std::to_string(p.max_heads) + "," + std::to_string(p.ell) + "," + fmt_g17(p.kappa) +
           "\n";
  }
  return out;
}

inline std::string gen_sweep_csv(const analysis::GenSweepResult& r) {
  std::string out = "n,l2_err\n";
  for (const analysis::GenPoint& p : r.points)
    out += std::to_string(p.n) + "," + fmt_g17(p.l2_err) + "\n";
  return out;
}

inline std::string id_sweep_csv(const std::vector<analysis::IdSweepRow>& rows) {
  std::string out = "sigma,id_noisy,id_clean\n";
  for (const analysis::IdSweepRow& r : rows)
    out += fmt_g17(r.sigma) + "," + fmt_g17(r.id_noisy) + "," + fmt_g17(r.id_clean) + "\n";
  return out;
}

}  // namespace relic::io
