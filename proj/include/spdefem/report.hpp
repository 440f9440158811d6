#pragma once

#include <cstdint>
#include <ostream>
#include <string>

#include "json.hpp"
#include "spdefem/experiments.hpp"

namespace spdefem {

/// Identification stamped into every output file.
struct Provenance {
  std::string config_hash;  // 16 hex digits
  std::uint64_t seed = 0;
  std::string version = SPDEFEM_VERSION;
  double runtime_seconds = 0.0;  // JSON only; CSV output stays byte-stable
};

/// Shortest round-trip decimal form with 17 significant digits.
std::string format_double(double x);

/// `# config_hash=..,seed=..,version=..` followed by
/// `level,h,error,stderr,usable` rows.
void write_csv(std::ostream& os, const RateReport& rep, const Provenance& prov);
nlohmann::json summary_json(const RateReport& rep, const Provenance& prov);
nlohmann::json summary_json(const MomentReport& rep, const Provenance& prov);

}  // namespace spdefem
