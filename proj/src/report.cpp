#include "spdefem/report.hpp"

#include <cstdio>

namespace spdefem {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_csv(std::ostream& os, const RateReport& rep, const Provenance& prov) {
  os << "# config_hash=" << prov.config_hash << ",seed=" << prov.seed << ",version=" << prov.version
     << ",report=" << rep.name << "\n";
  os << "level,h,error,stderr,usable\n";
  for (std::size_t i = 0; i < rep.levels.size(); ++i) {
    const auto& l = rep.levels[i];
    os << i << ',' << format_double(l.h) << ',' << format_double(l.error) << ','
       << format_double(l.std_error) << ',' << (l.usable ? 1 : 0) << '\n';
  }
}

namespace {

nlohmann::json provenance_fields(const Provenance& prov) {
  return {{"seed", prov.seed},
          {"config_hash", prov.config_hash},
          {"version", prov.version},
          {"runtime_seconds", prov.runtime_seconds},
          {"provenance", "spdefem " + prov.version + " config " + prov.config_hash}};
}

nlohmann::json diagnostics_json(const Diagnostics& d) {
  nlohmann::json j{{"aborted", d.aborted},
                   {"noise_floor", d.noise_floor},
                   {"monotone", d.monotone},
                   {"dt_used", d.dt_used},
                   {"notes", d.notes}};
  j["temporal_probe_ratio"] = d.temporal_probe_ratio ? nlohmann::json(*d.temporal_probe_ratio) : nullptr;
  return j;
}

}  // namespace

nlohmann::json summary_json(const RateReport& rep, const Provenance& prov) {
  nlohmann::json j = provenance_fields(prov);
  j["name"] = rep.name;
  j["abscissa"] = rep.abscissa;
  if (rep.fit) {
    j["slope"] = rep.fit->slope;
    j["ci_lo"] = rep.fit->ci_lo;
    j["ci_hi"] = rep.fit->ci_hi;
    j["levels_used"] = rep.fit->used;
  } else {
    j["slope"] = j["ci_lo"] = j["ci_hi"] = nullptr;
    j["levels_used"] = 0;
  }
  auto& levels = j["levels"] = nlohmann::json::array();
  for (const auto& l : rep.levels)
    levels.push_back({{"h", l.h}, {"error", l.error}, {"stderr", l.std_error}, {"usable", l.usable}});
  j["diagnostics"] = diagnostics_json(rep.diagnostics);
  return j;
}

nlohmann::json summary_json(const MomentReport& rep, const Provenance& prov) {
  nlohmann::json j = provenance_fields(prov);
  j["name"] = rep.name;
  auto& levels = j["levels"] = nlohmann::json::array();
  for (const auto& m : rep.levels)
    levels.push_back({{"h", m.h},
                      {"z_sup_sq", m.z_sup_sq},
                      {"z_sup_sq_stderr", m.z_sup_sq_se},
                      {"z_l2_sq", m.z_l2_sq},
                      {"z_l2_sq_stderr", m.z_l2_sq_se},
                      {"x_sup_sq", m.x_sup_sq},
                      {"x_sup_sq_stderr", m.x_sup_sq_se}});
  j["growth"] = {{"z_sup_sq", summary_json(rep.z_sup, prov)},
                 {"z_l2_sq", summary_json(rep.z_l2, prov)},
                 {"x_sup_sq", summary_json(rep.x_sup, prov)}};
  j["diagnostics"] = diagnostics_json(rep.diagnostics);
  return j;
}

}  // namespace spdefem
