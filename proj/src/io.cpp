#include "spde/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "spde/solver.hpp"

namespace spde {

using nlohmann::json;

std::string kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::tails: return "tails";
    case ExperimentKind::stable: return "stable";
    case ExperimentKind::pitchfork: return "pitchfork";
    case ExperimentKind::selftest: return "selftest";
    case ExperimentKind::schauder: return "schauder";
    case ExperimentKind::probe: return "probe";
  }
  return "?";
}

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error("invalid config:\n  " + [&] {
        std::string s;
        for (size_t i = 0; i < violations.size(); ++i) {
          if (i) s += "\n  ";
          s += violations[i];
        }
        return s;
      }()),
      violations_(std::move(violations)) {}

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Raw parsed file: ordered (section.key -> value).
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv(const std::string& text, std::vector<std::string>& errors) {
  KvMap kv;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    if (section.empty()) {
      errors.push_back("key '" + key + "' appears before any [section]");
      continue;
    }
    kv[section + "." + key] = trim(line.substr(eq + 1));
  }
  return kv;
}

class ConfigReader {
 public:
  ConfigReader(const KvMap& kv, std::vector<std::string>& errors)
      : kv_(kv), errors_(errors) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  void require(const std::string& key) {
    if (!has(key)) errors_.push_back("missing required key '" + key + "'");
  }

  template <typename T, typename Parse>
  void get(const std::string& key, T& out, Parse parse) {
    known_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return;
    try {
      out = parse(it->second);
    } catch (const std::exception&) {
      errors_.push_back("key '" + key + "': cannot parse value '" + it->second + "'");
    }
  }

  void get(const std::string& key, double& out) {
    get(key, out, [](const std::string& s) { return std::stod(s); });
  }
  void get(const std::string& key, int& out) {
    get(key, out, [](const std::string& s) { return std::stoi(s); });
  }
  void get(const std::string& key, uint64_t& out) {
    get(key, out, [](const std::string& s) { return std::stoull(s); });
  }
  void get(const std::string& key, bool& out) {
    get(key, out, [](const std::string& s) {
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      throw std::invalid_argument(s);
    });
  }
  void get(const std::string& key, std::string& out) {
    get(key, out, [](const std::string& s) { return s; });
  }
  void get(const std::string& key, std::vector<double>& out) {
    get(key, out, [](const std::string& s) {
      std::vector<double> v;
      std::istringstream is(s);
      double x;
      while (is >> x) v.push_back(x);
      if (!is.eof()) throw std::invalid_argument(s);
      return v;
    });
  }
  void get(const std::string& key, std::vector<int>& out) {
    get(key, out, [](const std::string& s) {
      std::vector<int> v;
      std::istringstream is(s);
      int x;
      while (is >> x) v.push_back(x);
      if (!is.eof()) throw std::invalid_argument(s);
      return v;
    });
  }

  void mark_known(const std::string& key) { known_.insert(key); }

  void finish_unknown_check() {
    for (const auto& [key, value] : kv_)
      if (!known_.count(key)) errors_.push_back("unknown key '" + key + "'");
  }

 private:
  const KvMap& kv_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
};

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  std::vector<std::string> errors;
  const KvMap kv = parse_kv(text, errors);
  ConfigReader r(kv, errors);
  RunConfig cfg;

  std::string kind;
  r.get("run.kind", kind);
  if (kind.empty()) {
    errors.push_back("missing required key 'run.kind'");
  } else if (kind == "tails") cfg.kind = ExperimentKind::tails;
  else if (kind == "stable") cfg.kind = ExperimentKind::stable;
  else if (kind == "pitchfork") cfg.kind = ExperimentKind::pitchfork;
  else if (kind == "selftest") cfg.kind = ExperimentKind::selftest;
  else if (kind == "schauder") cfg.kind = ExperimentKind::schauder;
  else if (kind == "probe") cfg.kind = ExperimentKind::probe;
  else errors.push_back("run.kind: unknown experiment '" + kind + "'");

  uint64_t seed = 0;
  int workers = 0;
  bool have_seed = r.has("run.seed"), have_workers = r.has("run.workers");
  r.get("run.seed", seed);
  r.get("run.workers", workers);
  r.get("run.output_dir", cfg.output.directory);
  r.get("run.json", cfg.output.json);
  r.get("run.csv", cfg.output.csv);

  r.get("tails.eps", cfg.tails.eps);
  r.get("tails.sigma", cfg.tails.sigma);
  r.get("tails.T", cfg.tails.T);
  r.get("tails.N", cfg.tails.N);
  r.get("tails.M", cfg.tails.M);
  r.get("tails.m_max", cfg.tails.m_max);
  r.get("tails.alphas", cfg.tails.alphas);
  r.get("tails.paths", cfg.tails.paths);
  r.get("tails.stride", cfg.tails.stride);

  r.get("stable.eps", cfg.stable.eps);
  r.get("stable.T", cfg.stable.T);
  r.get("stable.N", cfg.stable.N);
  r.get("stable.M", cfg.stable.M);
  r.get("stable.sigmas", cfg.stable.sigmas);
  r.get("stable.gamma", cfg.stable.gamma);
  r.get("stable.paths", cfg.stable.paths);
  r.get("stable.dt_factor", cfg.stable.dt_factor);
  r.get("stable.record_stride", cfg.stable.record_stride);

  int drift_n = 3;
  r.get("drift.n", drift_n);
  r.get("drift.p0", cfg.stable.p0);
  r.get("drift.p1", cfg.stable.p1);

  r.get("pitchfork.eps", cfg.pitchfork.eps);
  r.get("pitchfork.T", cfg.pitchfork.T);
  r.get("pitchfork.tstar", cfg.pitchfork.tstar);
  r.get("pitchfork.slope", cfg.pitchfork.slope);
  r.get("pitchfork.N", cfg.pitchfork.N);
  r.get("pitchfork.M", cfg.pitchfork.M);
  r.get("pitchfork.sigmas", cfg.pitchfork.sigmas);
  r.get("pitchfork.hminus_factor", cfg.pitchfork.hminus_factor);
  r.get("pitchfork.dt", cfg.pitchfork.dt);
  r.get("pitchfork.paths", cfg.pitchfork.paths);
  r.get("pitchfork.sigma0_control", cfg.pitchfork.sigma0_control);
  r.get("pitchfork.mode", cfg.pitchfork_mode);
  std::string convention = "sqrt";
  r.get("pitchfork.convention", convention);
  if (convention == "sqrt") cfg.pitchfork.convention = TubeConvention::sqrt_variance;
  else if (convention == "literal") cfg.pitchfork.convention = TubeConvention::literal_variance;
  else errors.push_back("pitchfork.convention: must be 'sqrt' or 'literal'");

  r.get("perp.eps", cfg.perp.eps);
  r.get("perp.T", cfg.perp.T);
  r.get("perp.tstar", cfg.perp.tstar);
  r.get("perp.slope", cfg.perp.slope);
  r.get("perp.N", cfg.perp.N);
  r.get("perp.M", cfg.perp.M);
  r.get("perp.sigmas", cfg.perp.sigmas);
  r.get("perp.H0_factor", cfg.perp.H0_factor);
  r.get("perp.gamma", cfg.perp.gamma);
  r.get("perp.dt", cfg.perp.dt);
  r.get("perp.paths", cfg.perp.paths);

  r.get("probe.sigma", cfg.probe.sigma);
  r.get("probe.N", cfg.probe.N);
  r.get("probe.M", cfg.probe.M);
  r.get("probe.m", cfg.probe.m);
  r.get("probe.q0_list", cfg.probe.q0_list);
  r.get("probe.alpha", cfg.probe.alpha);
  r.get("probe.paths", cfg.probe.paths);

  r.get("schauder.alpha", cfg.schauder.alpha);
  r.get("schauder.beta", cfg.schauder.beta);
  r.get("schauder.N", cfg.schauder.N);
  r.get("schauder.M", cfg.schauder.M);

  r.finish_unknown_check();

  if (have_seed) {
    cfg.tails.seed = cfg.stable.seed = cfg.pitchfork.seed = cfg.perp.seed =
        cfg.probe.seed = cfg.schauder.seed = seed;
  }
  if (have_workers) {
    cfg.tails.workers = cfg.stable.workers = cfg.pitchfork.workers =
        cfg.perp.workers = cfg.probe.workers = workers;
  }

  // Kind-specific required keys and constraints.
  auto require_kind = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys) r.require(k);
  };
  auto check_grid = [&](int N, int M, int degree, const std::string& where) {
    if (M != 0 && M < (degree + 1) * (2 * N + 1))
      errors.push_back(where + ": M = " + std::to_string(M) +
                       " violates M >= (n+1)(2N+1) = " +
                       std::to_string((degree + 1) * (2 * N + 1)));
  };
  switch (cfg.kind) {
    case ExperimentKind::tails:
      require_kind({"tails.eps", "tails.sigma", "tails.N", "tails.T", "tails.m_max"});
      if (cfg.tails.alphas.empty()) errors.push_back("tails.alphas: sweep must be non-empty");
      if (cfg.tails.paths < 1000) errors.push_back("tails.paths: need >= 1000");
      check_grid(cfg.tails.N, cfg.tails.M, cfg.tails.m_max, "tails.M");
      break;
    case ExperimentKind::stable:
      require_kind({"stable.eps", "stable.T", "stable.N", "stable.sigmas"});
      if (cfg.stable.sigmas.empty()) errors.push_back("stable.sigmas: sweep must be non-empty");
      if (drift_n % 2 == 0)
        errors.push_back("drift.n: the drift degree must be odd (got " +
                         std::to_string(drift_n) + ")");
      else if (drift_n != 3)
        errors.push_back("drift.n: only the cubic moving-branch family is implemented");
      check_grid(cfg.stable.N, cfg.stable.M, 3, "stable.M");
      break;
    case ExperimentKind::pitchfork:
      require_kind({"pitchfork.eps", "pitchfork.T", "pitchfork.tstar"});
      if (cfg.pitchfork_mode != "exit" && cfg.pitchfork_mode != "perp")
        errors.push_back("pitchfork.mode: must be 'exit' or 'perp'");
      if (cfg.pitchfork_mode == "exit" && cfg.pitchfork.sigmas.empty())
        errors.push_back("pitchfork.sigmas: sweep must be non-empty");
      if (cfg.pitchfork_mode == "perp" && cfg.perp.sigmas.empty())
        errors.push_back("perp.sigmas: sweep must be non-empty");
      check_grid(cfg.pitchfork.N, cfg.pitchfork.M, 3, "pitchfork.M");
      break;
    case ExperimentKind::probe:
      require_kind({"probe.sigma", "probe.N", "probe.m"});
      if (cfg.probe.q0_list.empty()) errors.push_back("probe.q0_list: sweep must be non-empty");
      check_grid(cfg.probe.N, cfg.probe.M, std::max(1, cfg.probe.m), "probe.M");
      break;
    case ExperimentKind::schauder:
      require_kind({"schauder.alpha", "schauder.beta", "schauder.N"});
      if (cfg.schauder.beta > cfg.schauder.alpha + 2.0)
        errors.push_back("schauder.beta: requires beta <= alpha + 2");
      break;
    case ExperimentKind::selftest:
      break;
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[run]\n";
  os << "kind = " << kind_name(cfg.kind) << "\n";
  os << "seed = " << cfg.tails.seed << "\n";
  os << "workers = " << cfg.tails.workers << "\n";
  os << "output_dir = " << cfg.output.directory << "\n";
  os << "json = " << (cfg.output.json ? "true" : "false") << "\n";
  os << "csv = " << (cfg.output.csv ? "true" : "false") << "\n";
  auto list = [&](const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
    return s;
  };
  os << "\n[tails]\n";
  os << "eps = " << fmt(cfg.tails.eps) << "\nsigma = " << fmt(cfg.tails.sigma)
     << "\nT = " << fmt(cfg.tails.T) << "\nN = " << cfg.tails.N
     << "\nM = " << cfg.tails.M << "\nm_max = " << cfg.tails.m_max
     << "\nalphas = " << list(cfg.tails.alphas) << "\npaths = " << cfg.tails.paths
     << "\nstride = " << fmt(cfg.tails.stride) << "\n";
  os << "\n[stable]\n";
  os << "eps = " << fmt(cfg.stable.eps) << "\nT = " << fmt(cfg.stable.T)
     << "\nN = " << cfg.stable.N << "\nM = " << cfg.stable.M
     << "\nsigmas = " << list(cfg.stable.sigmas) << "\ngamma = " << fmt(cfg.stable.gamma)
     << "\npaths = " << cfg.stable.paths << "\ndt_factor = " << fmt(cfg.stable.dt_factor)
     << "\nrecord_stride = " << cfg.stable.record_stride << "\n";
  os << "\n[drift]\n";
  os << "n = 3\np0 = " << fmt(cfg.stable.p0) << "\np1 = " << fmt(cfg.stable.p1) << "\n";
  os << "\n[pitchfork]\n";
  os << "eps = " << fmt(cfg.pitchfork.eps) << "\nT = " << fmt(cfg.pitchfork.T)
     << "\ntstar = " << fmt(cfg.pitchfork.tstar) << "\nslope = " << fmt(cfg.pitchfork.slope)
     << "\nN = " << cfg.pitchfork.N << "\nM = " << cfg.pitchfork.M
     << "\nsigmas = " << list(cfg.pitchfork.sigmas)
     << "\nhminus_factor = " << fmt(cfg.pitchfork.hminus_factor)
     << "\nconvention = "
     << (cfg.pitchfork.convention == TubeConvention::sqrt_variance ? "sqrt" : "literal")
     << "\ndt = " << fmt(cfg.pitchfork.dt) << "\npaths = " << cfg.pitchfork.paths
     << "\nsigma0_control = " << (cfg.pitchfork.sigma0_control ? "true" : "false")
     << "\nmode = " << cfg.pitchfork_mode << "\n";
  os << "\n[perp]\n";
  os << "eps = " << fmt(cfg.perp.eps) << "\nT = " << fmt(cfg.perp.T)
     << "\ntstar = " << fmt(cfg.perp.tstar) << "\nslope = " << fmt(cfg.perp.slope)
     << "\nN = " << cfg.perp.N << "\nM = " << cfg.perp.M
     << "\nsigmas = " << list(cfg.perp.sigmas)
     << "\nH0_factor = " << fmt(cfg.perp.H0_factor) << "\ngamma = " << fmt(cfg.perp.gamma)
     << "\ndt = " << fmt(cfg.perp.dt) << "\npaths = " << cfg.perp.paths << "\n";
  os << "\n[probe]\n";
  os << "sigma = " << fmt(cfg.probe.sigma) << "\nN = " << cfg.probe.N
     << "\nM = " << cfg.probe.M << "\nm = " << cfg.probe.m << "\nq0_list = ";
  for (size_t i = 0; i < cfg.probe.q0_list.size(); ++i)
    os << (i ? " " : "") << cfg.probe.q0_list[i];
  os << "\nalpha = " << fmt(cfg.probe.alpha) << "\npaths = " << cfg.probe.paths << "\n";
  os << "\n[schauder]\n";
  os << "alpha = " << fmt(cfg.schauder.alpha) << "\nbeta = " << fmt(cfg.schauder.beta)
     << "\nN = " << cfg.schauder.N << "\nM = " << cfg.schauder.M << "\n";
  return os.str();
}

uint64_t fnv1a64(const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 14695981039346656037ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write file: " + path);
  os << contents;
}

json fit_json(const FitSummary& f) {
  json j;
  j["valid"] = f.valid;
  if (!f.flag.empty()) j["flag"] = f.flag;
  j["slope"] = f.fit.slope;
  j["intercept"] = f.fit.intercept;
  j["slope_stderr"] = f.fit.slope_stderr;
  j["r2"] = f.fit.r2;
  j["points"] = f.fit.points;
  j["x_lo"] = f.x_lo;
  j["x_hi"] = f.x_hi;
  return j;
}

json table_json(const ExceedanceTable& t) {
  json j;
  j["h"] = t.h;
  j["p_hat"] = t.p_hat;
  j["lo"] = t.lo;
  j["hi"] = t.hi;
  j["rate"] = fit_json(t.rate);
  return j;
}

}  // namespace

std::string config_hash(const RunConfig& cfg) {
  const std::string s = serialize_config(cfg);
  return hex64(fnv1a64(s.data(), s.size()));
}

void RunManifest::add_file(const std::string& dir, const std::string& name) {
  const std::string contents = read_file(dir + "/" + name);
  files.push_back({name, contents.size(), hex64(fnv1a64(contents.data(), contents.size()))});
}

void RunManifest::write(const std::string& path) const {
  json j;
  j["config_hash"] = config_hash;
  j["code_version"] = code_version;
  j["config_text"] = config_text;
  j["started"] = started;
  j["finished"] = finished;
  j["incomplete"] = incomplete;
  j["files"] = json::array();
  for (const ManifestEntry& e : files)
    j["files"].push_back({{"name", e.name}, {"bytes", e.bytes}, {"checksum", e.checksum}});
  write_file(path, j.dump(2) + "\n");
}

RunManifest RunManifest::read(const std::string& path) {
  const json j = json::parse(read_file(path));
  RunManifest m;
  m.config_hash = j.value("config_hash", "");
  m.code_version = j.value("code_version", "");
  m.config_text = j.value("config_text", "");
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.incomplete = j.value("incomplete", true);
  for (const json& f : j.value("files", json::array()))
    m.files.push_back({f.value("name", ""), f.value("bytes", uint64_t{0}),
                       f.value("checksum", "")});
  return m;
}

void write_report(const TailReport& r, const std::string& dir, RunManifest& man) {
  json j;
  j["kind"] = "tails";
  j["note"] = r.note;
  j["cells"] = json::array();
  for (const TailCell& c : r.cells) {
    json cj;
    cj["m"] = c.m;
    cj["alpha"] = c.alpha;
    cj["table"] = table_json(c.table);
    j["cells"].push_back(cj);
  }
  write_file(dir + "/report.json", j.dump(2) + "\n");
  man.add_file(dir, "report.json");

  std::ostringstream csv;
  csv.precision(17);
  csv << "m,alpha,h,p_hat,lo,hi\n";
  for (const TailCell& c : r.cells)
    for (size_t i = 0; i < c.table.h.size(); ++i)
      csv << c.m << ',' << c.alpha << ',' << c.table.h[i] << ',' << c.table.p_hat[i]
          << ',' << c.table.lo[i] << ',' << c.table.hi[i] << '\n';
  write_file(dir + "/tails.csv", csv.str());
  man.add_file(dir, "tails.csv");
}

void write_report(const StableReport& r, const std::string& dir, RunManifest& man) {
  json j;
  j["kind"] = "stable";
  j["points"] = json::array();
  for (const StablePoint& p : r.points)
    j["points"].push_back(
        {{"sigma", p.sigma}, {"median_sup", p.median_sup}, {"diverged", p.diverged}});
  j["doubling_ratios"] = r.doubling_ratios;
  write_file(dir + "/report.json", j.dump(2) + "\n");
  man.add_file(dir, "report.json");

  std::ostringstream csv;
  csv.precision(17);
  csv << "sigma,median_sup,diverged\n";
  for (const StablePoint& p : r.points)
    csv << p.sigma << ',' << p.median_sup << ',' << p.diverged << '\n';
  write_file(dir + "/stable.csv", csv.str());
  man.add_file(dir, "stable.csv");
}

void write_report(const ExitReport& r, const std::string& dir, RunManifest& man) {
  json j;
  j["kind"] = "pitchfork-exit";
  j["sigma0_no_exit"] = r.sigma0_no_exit;
  j["delay_spread"] = r.delay_spread;
  j["points"] = json::array();
  for (const ExitPoint& p : r.points) {
    json pj;
    pj["sigma"] = p.sigma;
    pj["h_minus"] = p.h_minus;
    pj["h_plus"] = p.h_plus;
    pj["exits_minus"] = p.exits_minus;
    pj["censored_minus"] = p.censored_minus;
    pj["exits_plus"] = p.exits_plus;
    pj["censored_plus"] = p.censored_plus;
    pj["sd_at_tstar_sqrt_eps"] = p.sd_at_tstar_sqrt_eps;
    pj["median_delay"] = p.median_delay;
    pj["normalized_delay"] = p.normalized_delay;
    pj["fit_refused"] = p.fit_refused;
    j["points"].push_back(pj);
  }
  write_file(dir + "/report.json", j.dump(2) + "\n");
  man.add_file(dir, "report.json");

  std::ostringstream csv;
  csv.precision(17);
  csv << "sigma,path,tau_minus,tau_plus\n";
  for (const ExitPoint& p : r.points)
    for (size_t i = 0; i < p.tau_minus.size(); ++i) {
      csv << p.sigma << ',' << i << ',';
      if (std::isnan(p.tau_minus[i])) csv << "censored"; else csv << p.tau_minus[i];
      csv << ',';
      if (std::isnan(p.tau_plus[i])) csv << "censored"; else csv << p.tau_plus[i];
      csv << '\n';
    }
  write_file(dir + "/exit_times.csv", csv.str());
  man.add_file(dir, "exit_times.csv");
}

void write_report(const PerpReport& r, const std::string& dir, RunManifest& man) {
  json j;
  j["kind"] = "pitchfork-perp";
  j["points"] = json::array();
  for (const PerpPoint& p : r.points)
    j["points"].push_back({{"sigma", p.sigma},
                           {"H0", p.H0},
                           {"censored", p.censored},
                           {"median_censored", p.median_censored},
                           {"median_surviving", p.median_surviving}});
  j["exponent_censored"] = fit_json(r.exponent_censored);
  j["exponent_surviving"] = fit_json(r.exponent_surviving);
  write_file(dir + "/report.json", j.dump(2) + "\n");
  man.add_file(dir, "report.json");

  std::ostringstream csv;
  csv.precision(17);
  csv << "sigma,H0,censored,median_censored,median_surviving\n";
  for (const PerpPoint& p : r.points)
    csv << p.sigma << ',' << p.H0 << ',' << p.censored << ',' << p.median_censored
        << ',' << p.median_surviving << '\n';
  write_file(dir + "/perp.csv", csv.str());
  man.add_file(dir, "perp.csv");
}

void write_report(const ProbeReport& r, const std::string& dir, RunManifest& man) {
  json j;
  j["kind"] = "probe";
  j["pairing_bound_constant"] = r.pairing_bound_constant;
  j["cells"] = json::array();
  for (const ProbeCell& c : r.cells)
    j["cells"].push_back({{"q0", c.q0}, {"table", table_json(c.table)}});
  write_file(dir + "/report.json", j.dump(2) + "\n");
  man.add_file(dir, "report.json");

  std::ostringstream csv;
  csv.precision(17);
  csv << "q0,h,p_hat,lo,hi\n";
  for (const ProbeCell& c : r.cells)
    for (size_t i = 0; i < c.table.h.size(); ++i)
      csv << c.q0 << ',' << c.table.h[i] << ',' << c.table.p_hat[i] << ','
          << c.table.lo[i] << ',' << c.table.hi[i] << '\n';
  write_file(dir + "/probe.csv", csv.str());
  man.add_file(dir, "probe.csv");
}

namespace {

// Schauder probe: empirical heat-kernel constant on a reproducible rough
// field, t-grid refinement stability, and a single-mode closed form.
struct SchauderOutcome {
  double m_hat_coarse = 0.0, m_hat_fine = 0.0, rel_change = 0.0;
  double single_mode = 0.0, single_mode_expected = 0.0;
  bool pass = false;
};

SchauderOutcome schauder_probe(const SchauderProbeConfig& cfg) {
  SchauderOutcome out;
  const int N = cfg.N;
  FourierField g(N, cfg.M ? cfg.M : FourierField::min_grid(N, 1));
  RngStream rng(cfg.seed, 0);
  for (int k1 = 0; k1 <= N; ++k1) {
    const int r = N - k1;
    for (int k2 = (k1 == 0 ? 0 : -r); k2 <= r; ++k2) {
      const ModeIndex k{k1, k2};
      const double s = std::sqrt(0.5 / (1.0 + k.mu()));
      if (k.l1() == 0) g.set_pair(k, rng.normal());
      else g.set_pair(k, {s * rng.normal(), s * rng.normal()});
    }
  }
  auto grid = [](int points) {
    std::vector<double> t(points);
    for (int i = 0; i < points; ++i)
      t[i] = std::pow(10.0, -5.0 + 5.0 * i / (points - 1));
    return t;
  };
  out.m_hat_coarse = schauder_check(g, cfg.alpha, cfg.beta, grid(200));
  out.m_hat_fine = schauder_check(g, cfg.alpha, cfg.beta, grid(400));
  out.rel_change = std::abs(out.m_hat_fine - out.m_hat_coarse) /
                   std::max(1e-300, out.m_hat_fine);

  // Single conjugate pair at k = (3, 0): one dyadic block, so the constant is
  // sup over the grid of 2^{q(beta-alpha)} t^{(beta-alpha)/2} e^{-mu t}.
  FourierField sm(N, g.grid_size());
  const ModeIndex k0{3, 0};
  sm.set_pair(k0, {0.7, 0.4});
  const std::vector<double> tg = grid(400);
  out.single_mode = schauder_check(sm, cfg.alpha, cfg.beta, tg);
  const int q = annulus_of(k0.l1());
  double expected = 0.0;
  for (double t : tg)
    expected = std::max(expected, std::pow(2.0, q * (cfg.beta - cfg.alpha)) *
                                      std::pow(t, 0.5 * (cfg.beta - cfg.alpha)) *
                                      std::exp(-k0.mu() * t));
  out.single_mode_expected = expected;
  out.pass = std::isfinite(out.m_hat_fine) && out.rel_change < 0.05 &&
             std::abs(out.single_mode - out.single_mode_expected) <
                 1e-8 * std::max(1.0, expected);
  return out;
}

}  // namespace

int run_experiment(const RunConfig& cfg, std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output.directory);
  const std::string dir = cfg.output.directory;

  RunManifest man;
  man.config_hash = spde::config_hash(cfg);
  man.config_text = serialize_config(cfg);
  man.started = now_iso();
  const std::string manifest_path = dir + "/manifest.json";
  man.write(manifest_path);  // incomplete marker until we finish

  bool gates_pass = true;
  switch (cfg.kind) {
    case ExperimentKind::tails: {
      const TailReport rep = tail_experiment(cfg.tails);
      write_report(rep, dir, man);
      // Gate: linearity of the m = 1 cell and monotone rates in m per alpha.
      for (const TailCell& c : rep.cells) {
        if (c.m == 1) {
          if (!c.table.rate.valid || c.table.rate.fit.r2 <= 0.9) gates_pass = false;
          log << "m=1 alpha=" << c.alpha << " kappa=" << c.table.rate.fit.slope
              << " r2=" << c.table.rate.fit.r2 << "\n";
        }
      }
      for (size_t i = 0; i < rep.cells.size(); ++i)
        for (size_t j = 0; j < rep.cells.size(); ++j)
          if (rep.cells[i].alpha == rep.cells[j].alpha &&
              rep.cells[j].m == rep.cells[i].m + 1 && rep.cells[i].table.rate.valid &&
              rep.cells[j].table.rate.valid &&
              rep.cells[j].table.rate.fit.slope > 1.1 * rep.cells[i].table.rate.fit.slope)
            gates_pass = false;
      break;
    }
    case ExperimentKind::stable: {
      const StableReport rep = phi1_experiment(cfg.stable);
      write_report(rep, dir, man);
      for (const StablePoint& p : rep.points) {
        log << "sigma=" << p.sigma << " median=" << p.median_sup
            << " diverged=" << p.diverged << "\n";
        if (p.diverged > 0) gates_pass = false;
      }
      for (size_t i = 1; i < rep.points.size(); ++i)
        if (rep.points[i].median_sup <= rep.points[i - 1].median_sup) gates_pass = false;
      break;
    }
    case ExperimentKind::pitchfork: {
      if (cfg.pitchfork_mode == "perp") {
        const PerpReport rep = phi1perp_experiment(cfg.perp);
        write_report(rep, dir, man);
        log << "cubic exponent = " << rep.exponent_censored.fit.slope << "\n";
        if (!rep.exponent_censored.valid || rep.exponent_censored.fit.slope < 2.5 ||
            rep.exponent_censored.fit.slope > 3.5)
          gates_pass = false;
      } else {
        const ExitReport rep = pitchfork_exit_experiment(cfg.pitchfork);
        write_report(rep, dir, man);
        log << "delay spread = " << rep.delay_spread << "\n";
        for (const ExitPoint& p : rep.points)
          if (p.fit_refused) gates_pass = false;
        if (cfg.pitchfork.sigma0_control && !rep.sigma0_no_exit) gates_pass = false;
        if (rep.points.size() >= 2 && rep.delay_spread > 0.3) gates_pass = false;
      }
      break;
    }
    case ExperimentKind::probe: {
      const ProbeReport rep = pairing_probe(cfg.probe);
      write_report(rep, dir, man);
      log << "pairing bound constant = " << rep.pairing_bound_constant << "\n";
      const ProbeCell& first = rep.cells.front();
      const ProbeCell& last = rep.cells.back();
      if (!(first.table.rate.valid && last.table.rate.valid &&
            last.table.rate.fit.slope < first.table.rate.fit.slope))
        gates_pass = false;
      break;
    }
    case ExperimentKind::schauder: {
      const SchauderOutcome out = schauder_probe(cfg.schauder);
      json j;
      j["kind"] = "schauder";
      j["m_hat_coarse"] = out.m_hat_coarse;
      j["m_hat_fine"] = out.m_hat_fine;
      j["rel_change"] = out.rel_change;
      j["single_mode"] = out.single_mode;
      j["single_mode_expected"] = out.single_mode_expected;
      j["pass"] = out.pass;
      write_file(dir + "/report.json", j.dump(2) + "\n");
      man.add_file(dir, "report.json");
      log << "M_hat = " << out.m_hat_fine << " (refinement change "
          << out.rel_change * 100 << "%)\n";
      gates_pass = out.pass;
      break;
    }
    case ExperimentKind::selftest: {
      std::ostringstream os;
      const int rc = selftest(false, os);
      write_file(dir + "/report.json",
                 json{{"kind", "selftest"}, {"log", os.str()}, {"pass", rc == 0}}.dump(2) +
                     "\n");
      man.add_file(dir, "report.json");
      log << os.str();
      gates_pass = rc == 0;
      break;
    }
  }

  man.finished = now_iso();
  man.incomplete = false;
  man.write(manifest_path);
  log << (gates_pass ? "gates: PASS\n" : "gates: FAIL\n");
  return gates_pass ? 0 : 2;
}

int report_command(const std::string& manifest_path, std::ostream& os) {
  const RunManifest man = RunManifest::read(manifest_path);
  const std::string dir = std::filesystem::path(manifest_path).parent_path().string();
  os << "config hash: " << man.config_hash << "  code " << man.code_version << "\n";
  os << "started " << man.started << "  finished " << man.finished
     << (man.incomplete ? "  [INCOMPLETE]" : "") << "\n";
  if (man.files.empty()) {
    os << "no artifacts\n";
    return 0;
  }
  for (const ManifestEntry& e : man.files) {
    const std::string path = dir.empty() ? e.name : dir + "/" + e.name;
    std::string contents;
    try {
      contents = read_file(path);
    } catch (const std::exception&) {
      os << "integrity error: missing file " << e.name << "\n";
      return 1;
    }
    if (hex64(fnv1a64(contents.data(), contents.size())) != e.checksum) {
      os << "integrity error: checksum mismatch for " << e.name << "\n";
      return 1;
    }
  }
  const std::string rp = (dir.empty() ? std::string() : dir + "/") + "report.json";
  if (std::filesystem::exists(rp)) {
    const json j = json::parse(read_file(rp));
    const std::string kind = j.value("kind", "?");
    os << "report kind: " << kind << "\n";
    if (kind == "tails") {
      os << "  m  alpha  kappa  stderr  r2\n";
      for (const json& c : j["cells"]) {
        const json& f = c["table"]["rate"];
        os << "  " << c["m"].get<int>() << "  " << c["alpha"].get<double>() << "  "
           << f["slope"].get<double>() << "  " << f["slope_stderr"].get<double>()
           << "  " << f["r2"].get<double>() << "\n";
      }
    } else if (kind == "stable") {
      for (const json& p : j["points"])
        os << "  sigma " << p["sigma"].get<double>() << ": median "
           << p["median_sup"].get<double>() << "\n";
    } else if (kind == "pitchfork-exit") {
      os << "  delay spread " << j["delay_spread"].get<double>() << "\n";
      for (const json& p : j["points"])
        os << "  sigma " << p["sigma"].get<double>() << ": normalized delay "
           << p["normalized_delay"].get<double>() << " (exits "
           << p["exits_plus"].get<int>() << ", censored " << p["censored_plus"].get<int>()
           << ")\n";
    } else if (kind == "pitchfork-perp") {
      os << "  cubic exponent " << j["exponent_censored"]["slope"].get<double>() << "\n";
    } else if (kind == "probe") {
      for (const json& c : j["cells"])
        os << "  q0 " << c["q0"].get<int>() << ": rate "
           << c["table"]["rate"]["slope"].get<double>() << "\n";
    } else if (kind == "schauder") {
      os << "  M_hat " << j["m_hat_fine"].get<double>() << " pass "
         << j["pass"].get<bool>() << "\n";
    }
  }
  os << "all checksums verified\n";
  return 0;
}

int selftest(bool quick, std::ostream& os) {
  bool all = true;
  auto gate = [&](const std::string& name, bool ok) {
    os << (ok ? "PASS  " : "FAIL  ") << name << "\n";
    all = all && ok;
  };
  RngStream rng(99, 0);

  {  // Hermite recursion vs exact change-of-basis coefficients
    bool ok = true;
    const int trials = quick ? 100 : 1000;
    for (int t = 0; t < trials && ok; ++t) {
      const double x = 3.0 * rng.normal();
      const double C = std::exp(rng.normal());
      for (int m = 0; m <= 10; ++m) {
        const HermiteCoeffs hc = hermite_coeffs(m);
        double v = 0.0, mag = 0.0;  // mag tracks cancellation in the sum
        for (size_t l = 0; l < hc.a.size(); ++l) {
          const double term = static_cast<double>(hc.a[l]) * std::pow(C, l) *
                              std::pow(x, m - 2 * static_cast<int>(l));
          v += term;
          mag += std::abs(term);
        }
        const double h = hermite(m, x, C);
        if (std::abs(v - h) > 1e-10 * std::max(1.0, mag)) ok = false;
      }
    }
    gate("hermite recursion vs coefficients", ok);
  }

  {  // Wick binomial identity on scalars
    bool ok = true;
    for (int t = 0; t < 200 && ok; ++t) {
      const double x = rng.normal(), y = rng.normal();
      const double C1 = std::exp(rng.normal()), C2 = std::exp(rng.normal());
      for (int n = 0; n <= 6; ++n) {
        const double lhs = hermite(n, x + y, C1 + C2);
        const double rhs = wick_binomial(n, x, y, C1, C2);
        if (std::abs(lhs - rhs) > 1e-9 * std::max(1.0, std::abs(lhs))) ok = false;
      }
    }
    gate("wick binomial identity", ok);
  }

  {  // Parseval: coefficient L2 vs grid quadrature
    FourierField f(8, FourierField::min_grid(8, 1));
    for (int k1 = 0; k1 <= 8; ++k1)
      for (int k2 = (k1 == 0 ? 0 : -(8 - k1)); k2 <= 8 - k1; ++k2)
        f.set_pair({k1, k2}, {0.3 * rng.normal(), k1 == 0 && k2 == 0 ? 0.0 : 0.3 * rng.normal()});
    const std::vector<double> g = f.to_grid();
    double q = 0.0;
    for (double v : g) q += v * v;
    q = std::sqrt(q / g.size());
    gate("parseval identity", std::abs(q - f.l2_norm()) < 1e-10 * std::max(1.0, q));
  }

  {  // OU stationary variance
    const int samples = quick ? 5000 : 20000;
    ConvolutionConfig cc;
    cc.N = 8;
    cc.sigma = 0.1;
    std::vector<ModeIndex> modes{{0, 0}, {1, 0}, {2, 1}, {4, 4}};
    std::vector<RunningStat> st(modes.size());
    for (int s = 0; s < samples; ++s) {
      ConvolutionState state(cc, &rng);
      for (size_t i = 0; i < modes.size(); ++i) {
        const auto c = state.psi().coeff(modes[i]);
        st[i].add(c.real() * c.real() + c.imag() * c.imag());
      }
    }
    const RenormConstant rc = renorm_constant(8, 0.1);
    bool ok = true;
    for (size_t i = 0; i < modes.size(); ++i) {
      const double v = rc.v(modes[i]);
      if (std::abs(st[i].mean() - v) > 5.0 * st[i].stderr_mean()) ok = false;
    }
    gate("OU stationary variance", ok);
  }

  if (!quick) {  // chaos oracle vs Monte Carlo, smallest budget case
    const int N = 2, m = 2, q0 = 1;
    const RenormConstant rc = renorm_constant(N, 0.5);
    const double oracle = chaos_expectation_oracle({0, 2}, q0, N, rc);
    const int Nout = m * N, M = 32;
    ConvolutionConfig cc;
    cc.N = N;
    cc.M = M;
    cc.sigma = 0.5;
    RunningStat st;
    for (int s = 0; s < 20000; ++s) {
      ConvolutionState state(cc, &rng);
      std::vector<double> g = state.psi().annulus_project(1).to_grid();
      const double c1 = rc.per_annulus[1];
      for (double& v : g) v = hermite(2, v, c1);
      const FourierField w = FourierField::from_grid(g, M, Nout);
      const double b = w.block_l2(q0);
      st.add(b * b);
    }
    gate("chaos oracle vs MC",
         std::abs(st.mean() - oracle) <= 4.0 * st.stderr_mean());
  }

  return all ? 0 : 2;
}

}  // namespace spde
