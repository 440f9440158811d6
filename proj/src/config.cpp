#include "spdefem/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "spdefem/errors.hpp"

namespace spdefem {

using nlohmann::json;

namespace {

// A JSON object whose keys are consumed one by one; leftovers are unknown.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  double number(const std::string& key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(key_path(key), "expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw ConfigError(key_path(key), "must be finite");
    return x;
  }

  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0))
      throw ConfigError(key_path(key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(key_path(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array()) throw ConfigError(key_path(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_number() || !std::isfinite(e.get<double>()))
        throw ConfigError(key_path(key) + "[" + std::to_string(i) + "]", "expected a finite number");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) throw ConfigError(key_path(k), "unknown key");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class E>
E lookup(const std::string& path, const std::string& value, std::initializer_list<std::pair<const char*, E>> table) {
  std::string options;
  for (const auto& [name, e] : table) {
    if (value == name) return e;
    options += options.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(path, "unknown value '" + value + "' (expected one of " + options + ")");
}

constexpr std::initializer_list<std::pair<const char*, StudyKind>> kKinds{
    {"strong", StudyKind::kStrong},
    {"weak", StudyKind::kWeak},
    {"moments", StudyKind::kMoments},
    {"operators", StudyKind::kOperators},
    {"splitting_dt", StudyKind::kSplittingDt}};
constexpr std::initializer_list<std::pair<const char*, Scheme>> kSchemes{
    {"splitting", Scheme::kSplitting},
    {"exponential_euler", Scheme::kExponentialEuler},
    {"semi_implicit", Scheme::kSemiImplicit}};
constexpr std::initializer_list<std::pair<const char*, DtPolicy>> kPolicies{
    {"fixed", DtPolicy::kFixed}, {"coupled", DtPolicy::kCoupled}, {"probe", DtPolicy::kProbe}};
constexpr std::initializer_list<std::pair<const char*, ErrorOperator>> kOperators{
    {"l2", ErrorOperator::kL2Projection},
    {"ritz", ErrorOperator::kRitzProjection},
    {"semigroup", ErrorOperator::kSemigroup}};

template <class E>
const char* name_of(E e, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, v] : table)
    if (v == e) return name;
  return "?";
}

std::size_t count(Section& s, const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(s.unsigned_int(key, fallback));
}

void parse_noise(StudyConfig& cfg, const json& doc) {
  Section s(doc, "noise");
  const std::string type = s.text("type", "power_decay");
  const auto k_trunc = static_cast<int>(s.unsigned_int("k_trunc", CovarianceSpec::kDefaultTruncation));
  const double rho = s.number("rho", 2.0);
  const json* beta = s.find("beta");
  const auto q = s.numbers("q", {});
  s.finish();
  if (beta && !beta->is_number()) throw ConfigError("noise.beta", "expected a number");
  try {
    if (type == "power_decay") {
      cfg.noise = CovarianceSpec::power_decay(rho, k_trunc);
    } else if (type == "white") {
      cfg.noise = CovarianceSpec::white(k_trunc);
    } else if (type == "none") {
      cfg.noise = CovarianceSpec::none();
    } else if (type == "custom") {
      if (!beta) throw ConfigError("noise.beta", "custom covariance needs beta");
      cfg.noise = CovarianceSpec::custom_sequence(q, beta->get<double>());
    } else {
      throw ConfigError("noise.type", "unknown value '" + type + "' (expected power_decay, white, custom, none)");
    }
    cfg.noise.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError("noise", e.what());
  }
  if (beta && cfg.noise.kind != CovarianceKind::kCustom) {
    const double b = beta->get<double>();
    const ImpliedBeta implied = implied_beta(cfg.noise);
    const bool ok = b > 0.0 && (implied.attained ? b <= implied.value + 1e-12 : b < implied.value);
    if (!ok) {
      std::ostringstream os;
      os << "beta=" << b << " is inconsistent with the covariance: need 0 < beta "
         << (implied.attained ? "<= " : "< ") << implied.value;
      throw ConfigError("noise.beta", os.str());
    }
    cfg.noise.beta = b;
  }
}

void parse_drift(StudyConfig& cfg, const json& doc) {
  std::vector<double> coeffs;
  if (doc.is_string()) {
    if (doc.get<std::string>() != "allen_cahn") throw ConfigError("drift", "unknown drift '" + doc.get<std::string>() + "'");
    coeffs = PolynomialDrift::allen_cahn().coeffs();
  } else {
    Section s(doc, "drift");
    coeffs = s.numbers("coeffs", PolynomialDrift::allen_cahn().coeffs());
    s.finish();
  }
  std::size_t k = coeffs.size();
  while (k > 1 && coeffs[k - 1] == 0.0) --k;
  const int degree = static_cast<int>(k) - 1;
  if (cfg.kind == StudyKind::kWeak && degree >= 5)
    throw ConfigError("drift.coeffs", "weak convergence needs polynomial growth 2 <= K < 5, got K=" +
                                          std::to_string(degree));
  try {
    cfg.drift = PolynomialDrift(coeffs);
  } catch (const ArgumentError& e) {
    throw ConfigError("drift.coeffs", e.what());
  }
}

void validate(const StudyConfig& cfg) {
  if (!(cfg.length > 0.0)) throw ConfigError("length", "must be positive");
  if (!(cfg.final_time > 0.0)) throw ConfigError("time.T", "must be positive");
  for (std::size_t i = 0; i < cfg.h.size(); ++i)
    if (!(cfg.h[i] > 0.0 && cfg.h[i] <= cfg.length / 2))
      throw ConfigError("mesh.h[" + std::to_string(i) + "]", "must lie in (0, length/2]");
  if (cfg.h.empty()) throw ConfigError("mesh.h", "at least one mesh size is required");
  if (cfg.mesh.jitter < 0.0 || cfg.mesh.jitter > 0.25) throw ConfigError("mesh.jitter", "must lie in [0, 0.25]");

  const bool mc = cfg.kind != StudyKind::kOperators;
  const bool has_ref = cfg.kind == StudyKind::kStrong || cfg.kind == StudyKind::kWeak;
  if (has_ref) {
    const double hmin = *std::min_element(cfg.h.begin(), cfg.h.end());
    if (!(cfg.reference_h() < hmin / 2)) throw ConfigError("mesh.h_ref", "reference mesh must satisfy h_ref < min(h)/2");
  }
  if (mc) {
    if (cfg.samples < 100) throw ConfigError("monte_carlo.samples", "at least 100 samples are required");
    if (!(cfg.p >= 1.0)) throw ConfigError("monte_carlo.p", "moment order must be at least 1");
    if (!(cfg.dt > 0.0)) throw ConfigError("time.dt", "must be positive");
  }
  if (cfg.kind == StudyKind::kWeak && !TestFunctional::is_shipped(cfg.functional.id))
    throw ConfigError("functional.id", "'" + cfg.functional.id +
                                           "' is not a shipped bounded functional with bounded first and "
                                           "second derivatives");
  if (cfg.kind == StudyKind::kWeak && cfg.functional.id == "cos_inner" && cfg.functional.direction.empty())
    throw ConfigError("functional.direction", "cos_inner needs a direction");
  if (cfg.kind == StudyKind::kSplittingDt) {
    if (cfg.h.size() != 1) throw ConfigError("mesh.h", "splitting_dt study uses exactly one mesh size");
    if (cfg.dt_levels.empty()) throw ConfigError("time.dt_levels", "required for splitting_dt studies");
    if (!(cfg.dt_ref > 0.0)) throw ConfigError("time.dt_ref", "required for splitting_dt studies");
    for (double d : cfg.dt_levels)
      if (!(d > cfg.dt_ref)) throw ConfigError("time.dt_levels", "every level must be coarser than dt_ref");
  }
  if (cfg.kind == StudyKind::kOperators && cfg.operators.empty())
    throw ConfigError("operators", "at least one operator case is required");
  if (cfg.scheme == Scheme::kSemiImplicit && cfg.dt_policy == DtPolicy::kProbe)
    throw ConfigError("time.dt_policy", "the dt probe is only defined for exponential schemes");
}

}  // namespace

const char* kind_name(StudyKind kind) { return name_of(kind, kKinds); }
const char* scheme_name(Scheme scheme) { return name_of(scheme, kSchemes); }

StudyConfig parse_config(const json& doc) {
  StudyConfig cfg;
  Section root(doc, "");
  const json* kind = root.find("kind");
  if (!kind || !kind->is_string()) throw ConfigError("kind", "required string");
  cfg.kind = lookup("kind", kind->get<std::string>(), kKinds);
  cfg.name = root.text("name", kind->get<std::string>());
  cfg.scheme = lookup("scheme", root.text("scheme", "splitting"), kSchemes);
  cfg.seed = root.unsigned_int("seed", cfg.seed);
  cfg.length = root.number("length", cfg.length);
  cfg.spectral_modes = static_cast<int>(root.unsigned_int("spectral_modes", 0));

  if (const json* m = root.find("mesh")) {
    Section s(*m, "mesh");
    cfg.h = s.numbers("h", {});
    cfg.h_ref = s.number("h_ref", 0.0);
    cfg.mesh.jitter = s.number("jitter", 0.0);
    cfg.mesh.jittered = cfg.mesh.jitter > 0.0;
    cfg.mesh.seed = s.unsigned_int("seed", cfg.mesh.seed);
    s.finish();
  }
  if (const json* t = root.find("time")) {
    Section s(*t, "time");
    cfg.final_time = s.number("T", cfg.final_time);
    cfg.dt = s.number("dt", cfg.dt);
    cfg.dt_policy = lookup("time.dt_policy", s.text("dt_policy", "fixed"), kPolicies);
    cfg.dt_levels = s.numbers("dt_levels", {});
    cfg.dt_ref = s.number("dt_ref", 0.0);
    cfg.probe_samples = count(s, "probe_samples", cfg.probe_samples);
    cfg.probe_halvings = count(s, "probe_halvings", cfg.probe_halvings);
    cfg.probe_tolerance = s.number("probe_tolerance", cfg.probe_tolerance);
    s.finish();
  }
  if (const json* n = root.find("noise")) parse_noise(cfg, *n);
  if (const json* d = root.find("drift")) parse_drift(cfg, *d);
  if (const json* m = root.find("monte_carlo")) {
    Section s(*m, "monte_carlo");
    cfg.samples = count(s, "samples", cfg.samples);
    cfg.p = s.number("p", cfg.p);
    s.finish();
  }
  if (const json* f = root.find("functional")) {
    Section s(*f, "functional");
    cfg.functional.id = s.text("id", cfg.functional.id);
    cfg.functional.direction = s.numbers("direction", cfg.functional.direction);
    cfg.functional.value = s.number("value", cfg.functional.value);
    s.finish();
  }
  if (const json* x = root.find("initial")) {
    Section s(*x, "initial");
    cfg.initial_modes = s.numbers("modes", cfg.initial_modes);
    s.finish();
  }
  if (const json* ops = root.find("operators")) {
    if (!ops->is_array()) throw ConfigError("operators", "expected an array");
    for (std::size_t i = 0; i < ops->size(); ++i) {
      const std::string path = "operators[" + std::to_string(i) + "]";
      Section s((*ops)[i], path);
      OperatorCase op;
      op.s = s.number("s", op.s);
      op.r = s.number("r", op.r);
      op.which = lookup(path + ".op", s.text("op", "l2"), kOperators);
      op.t = s.number("t", op.t);
      s.finish();
      if (op.s < 0.0 || op.s > 1.0) throw ConfigError(path + ".s", "must lie in [0, 1]");
      if (op.r < 0.0 || op.r > 2.0) throw ConfigError(path + ".r", "must lie in [0, 2]");
      if (op.which != ErrorOperator::kSemigroup && op.r < op.s) throw ConfigError(path + ".r", "must be >= s");
      if (op.which == ErrorOperator::kRitzProjection && op.r < 1.0)
        throw ConfigError(path + ".r", "Ritz projection error needs r >= 1");
      if (op.which == ErrorOperator::kSemigroup && (op.s != 0.0 || !(op.t > 0.0)))
        throw ConfigError(path, "semigroup error needs s = 0 and t > 0");
      cfg.operators.push_back(op);
    }
  }
  if (const json* m = root.find("moments")) {
    Section s(*m, "moments");
    cfg.checkpoints = count(s, "checkpoints", cfg.checkpoints);
    s.finish();
  }
  root.finish();
  validate(cfg);
  return cfg;
}

StudyConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", e.what());
  }
  return parse_config(doc);
}

StudyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const StudyConfig& cfg) {
  json noise;
  switch (cfg.noise.kind) {
    case CovarianceKind::kPowerDecay:
      noise = {{"type", "power_decay"}, {"rho", cfg.noise.rho}, {"k_trunc", cfg.noise.k_trunc}};
      break;
    case CovarianceKind::kWhite:
      noise = {{"type", "white"}, {"k_trunc", cfg.noise.k_trunc}};
      break;
    case CovarianceKind::kCustom:
      if (cfg.noise.is_zero()) {
        noise = {{"type", "none"}};
      } else {
        noise = {{"type", "custom"}, {"q", cfg.noise.custom}};
      }
      break;
  }
  if (cfg.noise.beta && !cfg.noise.is_zero()) noise["beta"] = *cfg.noise.beta;
  json ops = json::array();
  for (const auto& op : cfg.operators)
    ops.push_back({{"s", op.s}, {"r", op.r}, {"op", name_of(op.which, kOperators)}, {"t", op.t}});
  return {
      {"name", cfg.name},
      {"kind", kind_name(cfg.kind)},
      {"scheme", scheme_name(cfg.scheme)},
      {"seed", cfg.seed},
      {"length", cfg.length},
      {"spectral_modes", cfg.spectral_modes},
      {"mesh", {{"h", cfg.h}, {"h_ref", cfg.h.empty() ? 0.0 : cfg.reference_h()}, {"jitter", cfg.mesh.jitter},
                {"seed", cfg.mesh.seed}}},
      {"time", {{"T", cfg.final_time},
                {"dt", cfg.dt},
                {"dt_policy", name_of(cfg.dt_policy, kPolicies)},
                {"dt_levels", cfg.dt_levels},
                {"dt_ref", cfg.dt_ref},
                {"probe_samples", cfg.probe_samples},
                {"probe_halvings", cfg.probe_halvings},
                {"probe_tolerance", cfg.probe_tolerance}}},
      {"noise", noise},
      {"drift", {{"coeffs", cfg.drift.coeffs()}}},
      {"monte_carlo", {{"samples", cfg.samples}, {"p", cfg.p}}},
      {"functional", {{"id", cfg.functional.id}, {"direction", cfg.functional.direction},
                      {"value", cfg.functional.value}}},
      {"initial", {{"modes", cfg.initial_modes}}},
      {"operators", ops},
      {"moments", {{"checkpoints", cfg.checkpoints}}},
  };
}

std::string config_hash(const StudyConfig& cfg) {
  json doc = config_to_json(cfg);
  doc.erase("seed");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace spdefem
