#pragma once

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "packopt/error.hpp"
#include "packopt/io/atomic_file.hpp"
#include "packopt/shapeopt.hpp"

namespace packopt::io {

inline constexpr const char* kHistoryHeader = "iter,J,beta,c_out,dp,a_geo,min_quality,step,grad_norm";

inline std::string format_history(const std::vector<OptimizationRecord>& rows) {
  std::string out = std::string(kHistoryHeader) + "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter,
                  r.J, r.beta, r.c_out, r.dp, r.a_geo, r.min_quality, r.step, r.grad_norm);
    out += buf;
  }
  return out;
}

inline void write_history(const std::filesystem::path& path,
                          const std::vector<OptimizationRecord>& rows) {
  write_atomic(path, format_history(rows));
}

inline std::vector<OptimizationRecord> parse_history(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHistoryHeader) throw IoError("history: bad header");
  std::vector<OptimizationRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    OptimizationRecord r;
    if (std::sscanf(line.c_str(), "%d,%lg,%lg,%lg,%lg,%lg,%lg,%lg,%lg", &r.iter, &r.J, &r.beta,
                    &r.c_out, &r.dp, &r.a_geo, &r.min_quality, &r.step, &r.grad_norm) != 9)
      throw IoError("history: malformed row: " + line);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace packopt::io
