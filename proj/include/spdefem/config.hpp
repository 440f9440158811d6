#pragma once

#include <string>

#include "json.hpp"
#include "spdefem/experiments.hpp"

namespace spdefem {

/// Parses and validates a JSON study document. Unknown keys, wrong types
/// and inadmissible values raise ConfigError carrying the key path.
///
/// Layout (all sections optional except `kind` and `mesh.h`):
///   name, kind, scheme, seed, length
///   mesh:        h[], h_ref, jitter, seed
///   time:        T, dt, dt_policy, dt_levels[], dt_ref,
///                probe_samples, probe_halvings, probe_tolerance
///   noise:       type (power_decay|white|custom|none), rho, k_trunc, q[], beta
///   drift:       coeffs[] (a_0 + a_1 x + ...) or the string "allen_cahn"
///   monte_carlo: samples, p
///   functional:  id, direction[], value
///   initial:     modes[]
///   operators:   [{s, r, op (l2|ritz|semigroup), t}]
///   moments:     checkpoints
///   spectral_modes
StudyConfig parse_config(const std::string& text);
StudyConfig parse_config(const nlohmann::json& doc);
StudyConfig load_config(const std::string& path);

/// Canonical form of a parsed configuration (all defaults filled in).
nlohmann::json config_to_json(const StudyConfig& cfg);

/// FNV-1a hash of the canonical form without the seed, as 16 hex digits.
std::string config_hash(const StudyConfig& cfg);

const char* kind_name(StudyKind kind);
const char* scheme_name(Scheme scheme);

}  // namespace spdefem
