// geoinv command-line front end. Talks to the library only through the C API.
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoinv/geoinv.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kReplayMismatch = 5,
  kInternal = 70,
};

struct CliError {
  int exit_code;
  std::string message;
};

int exit_for(geoinv_status s) {
  switch (s) {
    case GEOINV_OK: return kOk;
    case GEOINV_ERR_CONFIG:
    case GEOINV_ERR_INVALID_BOUNDS:
    case GEOINV_ERR_RESOLUTION: return kConfig;
    case GEOINV_ERR_NUMERIC: return kNumeric;
    case GEOINV_ERR_INTERNAL: return kInternal;
    default: return kData;
  }
}

void check(geoinv_status s) {
  if (s != GEOINV_OK) {
    throw CliError{exit_for(s), std::string(geoinv_status_name(s)) + ": " + geoinv_last_error()};
  }
}

struct StringDeleter {
  void operator()(char* s) const { geoinv_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

template <typename T, void (*Free)(T*)>
struct HandleDeleter {
  void operator()(T* p) const { Free(p); }
};
using Config = std::unique_ptr<geoinv_config, HandleDeleter<geoinv_config, geoinv_config_free>>;
using Volume = std::unique_ptr<geoinv_volume, HandleDeleter<geoinv_volume, geoinv_volume_free>>;
using Field = std::unique_ptr<geoinv_fielddata, HandleDeleter<geoinv_fielddata, geoinv_fielddata_free>>;
using MapResult =
    std::unique_ptr<geoinv_map_result, HandleDeleter<geoinv_map_result, geoinv_map_result_free>>;
using SampleSet =
    std::unique_ptr<geoinv_sample_set, HandleDeleter<geoinv_sample_set, geoinv_sample_set_free>>;

std::string take(char* s) { return std::string(CString(s).get()); }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CliError{kData, "cannot open '" + p.string() + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError{kData, "cannot write '" + tmp.string() + "'"};
    out << text;
    if (!out) throw CliError{kData, "short write to '" + tmp.string() + "'"};
  }
  fs::rename(tmp, p);
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw CliError{kConfig, what + ": " + e.what()};
  }
}

std::string sha256(const fs::path& p) {
  char buf[65];
  check(geoinv_file_sha256(p.string().c_str(), buf));
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Everything needed to run a subcommand; also what the manifest records.
struct Invocation {
  std::string command;
  json config = nullptr;                 // effective run config after overrides
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // role -> path
  json params = json::object();          // subcommand-specific flags
  fs::path out;
};

Config make_config(const Invocation& inv) {
  geoinv_config* raw = nullptr;
  const std::string text = inv.config.is_null() ? std::string("{}") : inv.config.dump();
  check(geoinv_config_parse(text.c_str(), &raw));
  return Config(raw);
}

Field load_field(const std::string& path) {
  geoinv_fielddata* raw = nullptr;
  check(geoinv_fielddata_read(path.c_str(), &raw));
  return Field(raw);
}

Volume load_volume(const std::string& path) {
  geoinv_volume* raw = nullptr;
  check(geoinv_volume_read(path.c_str(), &raw));
  return Volume(raw);
}

const std::string& input(const Invocation& inv, const std::string& role) {
  const auto it = inv.inputs.find(role);
  if (it == inv.inputs.end()) throw CliError{kConfig, "missing input --" + role};
  return it->second;
}

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  std::string path(const std::string& rel) {
    const fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    files_.push_back(rel);
    return p.string();
  }
  const std::vector<std::string>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

void write_volume(const geoinv_volume* v, const std::string& path) {
  check(geoinv_volume_write(v, path.c_str()));
}

int run_synth(const Invocation& inv, Outputs& out) {
  const Config cfg = make_config(inv);
  geoinv_volume* rho = nullptr;
  geoinv_volume* chi = nullptr;
  geoinv_volume* labels = nullptr;
  geoinv_fielddata* data = nullptr;
  check(geoinv_synthesize(cfg.get(), inv.seed, &rho, &chi, &labels, &data));
  const Volume r(rho), c(chi), l(labels);
  const Field d(data);
  write_volume(r.get(), out.path("rho.pvol"));
  write_volume(c.get(), out.path("chi.pvol"));
  write_volume(l.get(), out.path("labels.pvol"));
  check(geoinv_fielddata_write(d.get(), out.path("field.fdat").c_str()));
  check(geoinv_survey_write(d.get(), out.path("survey.surv").c_str()));
  return kOk;
}

int run_forward(const Invocation& inv, Outputs& out) {
  const Volume rho = load_volume(input(inv, "rho"));
  const Volume chi = load_volume(input(inv, "chi"));
  const Field like = load_field(input(inv, "like"));
  geoinv_fielddata* pred = nullptr;
  check(geoinv_forward(rho.get(), chi.get(), like.get(), &pred));
  const Field p(pred);
  check(geoinv_fielddata_write(p.get(), out.path("pred.fdat").c_str()));
  return kOk;
}

int run_invert_map(const Invocation& inv, Outputs& out) {
  const Config cfg = make_config(inv);
  const Field obs = load_field(input(inv, "obs"));
  geoinv_map_result* raw = nullptr;
  check(geoinv_invert_map(cfg.get(), obs.get(), inv.seed, &raw));
  const MapResult res(raw);
  geoinv_volume* rho = nullptr;
  geoinv_volume* chi = nullptr;
  check(geoinv_map_result_model(res.get(), &rho, &chi));
  const Volume r(rho), c(chi);
  write_volume(r.get(), out.path("rho.pvol"));
  write_volume(c.get(), out.path("chi.pvol"));
  char* csv = nullptr;
  check(geoinv_map_result_trace_csv(res.get(), &csv));
  write_text(out.path("trace.csv"), take(csv));
  char* summary = nullptr;
  check(geoinv_map_result_summary_json(res.get(), &summary));
  write_text(out.path("summary.json"), take(summary) + "\n");
  return kOk;
}

int run_sample(const Invocation& inv, Outputs& out) {
  const Config cfg = make_config(inv);
  const Field obs = load_field(input(inv, "obs"));
  const auto chains = inv.params.at("chains").get<std::size_t>();
  geoinv_sample_set* raw = nullptr;
  check(geoinv_sample(cfg.get(), obs.get(), chains, inv.seed, &raw));
  const SampleSet set(raw);
  int code = kOk;
  std::size_t done = 0;
  for (std::size_t c = 0; c < geoinv_sample_set_count(set.get()); ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "chain_%03zu", c);
    const std::string dir = name;
    char* diag = nullptr;
    check(geoinv_sample_set_diagnostics_json(set.get(), c, &diag));
    write_text(out.path(dir + "/diagnostics.json"), take(diag) + "\n");
    if (geoinv_sample_set_aborted(set.get(), c) == 1) {
      std::cerr << "warning: chain " << c << " aborted (see " << dir << "/diagnostics.json)\n";
      code = kNumeric;
      continue;
    }
    geoinv_volume* rho = nullptr;
    geoinv_volume* chi = nullptr;
    geoinv_volume* phi = nullptr;
    check(geoinv_sample_set_volumes(set.get(), c, &rho, &chi, &phi));
    const Volume r(rho), x(chi), p(phi);
    write_volume(r.get(), out.path(dir + "/rho.pvol"));
    write_volume(x.get(), out.path(dir + "/chi.pvol"));
    write_volume(p.get(), out.path(dir + "/phi.pvol"));
    ++done;
  }
  if (done > 0) {
    geoinv_volume* v[4] = {nullptr, nullptr, nullptr, nullptr};
    check(geoinv_sample_set_moments(set.get(), &v[0], &v[1], &v[2], &v[3]));
    const Volume mr(v[0]), mc(v[1]), sr(v[2]), sc(v[3]);
    write_volume(mr.get(), out.path("mean_rho.pvol"));
    write_volume(mc.get(), out.path("mean_chi.pvol"));
    write_volume(sr.get(), out.path("std_rho.pvol"));
    write_volume(sc.get(), out.path("std_chi.pvol"));
  }
  char* summary = nullptr;
  check(geoinv_sample_set_summary_json(set.get(), &summary));
  write_text(out.path("summary.json"), take(summary) + "\n");
  return code;
}

int run_metrics(const Invocation& inv, Outputs& out) {
  json report = json::object();
  if (inv.inputs.count("tables")) {
    const std::string text = read_text(input(inv, "tables"));
    char* raw = nullptr;
    check(geoinv_metrics_report(text.c_str(), &raw));
    report = parse_json(take(raw), "metrics report");
  }
  if (inv.inputs.count("pred") || inv.inputs.count("obs")) {
    const Field pred = load_field(input(inv, "pred"));
    const Field obs = load_field(input(inv, "obs"));
    double rg = 0.0;
    double rm = 0.0;
    check(geoinv_fielddata_rmse(pred.get(), obs.get(), &rg, &rm));
    report["rmse_grav"] = rg;
    report["rmse_mag"] = rm;
  }
  if (report.empty()) throw CliError{kConfig, "metrics needs --tables or --pred/--obs"};
  write_text(out.path("metrics.json"), report.dump(2) + "\n");
  return kOk;
}

int run_gl_diag(const Invocation& inv, Outputs& out) {
  const Config cfg = make_config(inv);
  char* csv = nullptr;
  check(geoinv_gl_diagnostic(cfg.get(), &csv));
  write_text(out.path("gl_diag.csv"), take(csv));
  return kOk;
}

int dispatch(const Invocation& inv, Outputs& out) {
  if (inv.command == "synth") return run_synth(inv, out);
  if (inv.command == "forward") return run_forward(inv, out);
  if (inv.command == "invert-map") return run_invert_map(inv, out);
  if (inv.command == "sample") return run_sample(inv, out);
  if (inv.command == "metrics") return run_metrics(inv, out);
  if (inv.command == "gl-diag") return run_gl_diag(inv, out);
  throw CliError{kConfig, "unknown subcommand '" + inv.command + "'"};
}

json manifest_for(const Invocation& inv, const Outputs& out, const std::vector<std::string>& argv,
                  int code) {
  json m;
  m["tool"] = "geoinv";
  m["version"] = geoinv_version();
  m["command"] = inv.command;
  m["argv"] = argv;
  m["config"] = inv.config;
  m["seed"] = inv.seed;
  m["params"] = inv.params;
  json inputs = json::object();
  for (const auto& [role, path] : inv.inputs) {
    inputs[role] = {{"path", fs::absolute(path).string()}, {"sha256", sha256(path)}};
  }
  m["inputs"] = std::move(inputs);
  json outputs = json::object();
  for (const std::string& rel : out.files()) outputs[rel] = sha256(out.dir() / rel);
  m["outputs"] = std::move(outputs);
  m["exit_code"] = code;
  m["timestamp"] = utc_timestamp();
  return m;
}

int execute(const Invocation& inv, const std::vector<std::string>& argv) {
  Outputs out(inv.out);
  const int code = dispatch(inv, out);
  write_text(inv.out / "manifest.json", manifest_for(inv, out, argv, code).dump(2) + "\n");
  return code;
}

int replay(const fs::path& manifest_path, const std::optional<fs::path>& out_override,
           const std::vector<std::string>& argv) {
  const json m = parse_json(read_text(manifest_path), "manifest");
  Invocation inv;
  try {
    inv.command = m.at("command").get<std::string>();
    inv.config = m.at("config");
    inv.seed = m.at("seed").get<std::uint64_t>();
    inv.params = m.at("params");
    for (const auto& [role, entry] : m.at("inputs").items()) {
      const std::string path = entry.at("path").get<std::string>();
      if (sha256(path) != entry.at("sha256").get<std::string>()) {
        throw CliError{kData, "input '" + path + "' changed since the recorded run"};
      }
      inv.inputs[role] = path;
    }
  } catch (const json::exception& e) {
    throw CliError{kConfig, std::string("manifest: ") + e.what()};
  }
  inv.out = out_override ? *out_override : manifest_path.parent_path() / "replay";
  if (fs::equivalent(fs::absolute(inv.out), fs::absolute(manifest_path.parent_path()))) {
    throw CliError{kConfig, "replay output directory must differ from the recorded one"};
  }
  execute(inv, argv);

  const json fresh = parse_json(read_text(inv.out / "manifest.json"), "replay manifest");
  int mismatches = 0;
  for (const auto& [rel, digest] : m.at("outputs").items()) {
    const auto it = fresh.at("outputs").find(rel);
    if (it == fresh.at("outputs").end()) {
      std::cerr << "missing  " << rel << "\n";
      ++mismatches;
    } else if (*it != digest) {
      std::cerr << "differs  " << rel << "\n";
      ++mismatches;
    }
  }
  if (fresh.at("outputs").size() != m.at("outputs").size()) ++mismatches;
  std::cout << (mismatches == 0 ? "replay identical: " : "replay MISMATCH: ")
            << m.at("outputs").size() << " outputs compared\n";
  return mismatches == 0 ? kOk : kReplayMismatch;
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  json j = parse_json(read_text(path), "config '" + path + "'");
  if (!j.is_object()) throw CliError{kConfig, "config must be a JSON object"};
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoinv: joint gravity/magnetic inversion toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(geoinv_version()));

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  const auto common = [&](CLI::App* sub, bool needs_out = true) {
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--threads", threads, "cap on worker threads")->check(CLI::PositiveNumber);
    auto* o = sub->add_option("--out", out_dir, "output directory");
    if (needs_out) o->required();
  };

  auto* synth = app.add_subcommand("synth", "build a synthetic scenario and its field data");
  common(synth);

  std::string rho_path, chi_path, like_path;
  auto* forward = app.add_subcommand("forward", "predict fields for a model on a survey");
  common(forward);
  forward->add_option("--rho", rho_path, "density volume (PVOL1)")->required()->check(CLI::ExistingFile);
  forward->add_option("--chi", chi_path, "susceptibility volume (PVOL1)")->required()->check(CLI::ExistingFile);
  forward->add_option("--like", like_path, "field data supplying survey and field config")
      ->required()
      ->check(CLI::ExistingFile);

  std::string obs_path, grid_path;
  std::optional<double> lambda_gl;
  auto* invert = app.add_subcommand("invert-map", "MAP inversion by projected gradient descent");
  common(invert);
  invert->add_option("--obs", obs_path, "observed field data (FDAT1)")->required()->check(CLI::ExistingFile);
  invert->add_option("--grid", grid_path, "grid JSON")->check(CLI::ExistingFile);
  invert->add_option("--lambda-gl", lambda_gl, "GL regularisation weight");

  std::size_t chains = 1;
  auto* sample = app.add_subcommand("sample", "posterior sampling");
  common(sample);
  sample->add_option("--obs", obs_path, "observed field data (FDAT1)")->required()->check(CLI::ExistingFile);
  sample->add_option("--grid", grid_path, "grid JSON")->check(CLI::ExistingFile);
  sample->add_option("--chains", chains, "number of chains")->check(CLI::PositiveNumber);

  std::string tables_path, pred_path;
  auto* metrics = app.add_subcommand("metrics", "RMSE and delta-RMSE ranking");
  common(metrics);
  metrics->add_option("--tables", tables_path, "JSON RMSE tables")->check(CLI::ExistingFile);
  metrics->add_option("--pred", pred_path, "predicted field data")->check(CLI::ExistingFile);
  metrics->add_option("--obs", obs_path, "observed field data")->check(CLI::ExistingFile);

  auto* gldiag = app.add_subcommand("gl-diag", "interface-energy convergence diagnostic");
  common(gldiag);

  std::string manifest_path;
  auto* rerun = app.add_subcommand("replay", "re-run from a manifest and compare output hashes");
  rerun->add_option("manifest", manifest_path, "manifest.json of a previous run")
      ->required()
      ->check(CLI::ExistingFile);
  rerun->add_option("--out", out_dir, "output directory (default: <run>/replay)");
  rerun->add_option("--threads", threads, "cap on worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (const char* env = std::getenv("GEOINV_THREADS"); threads == 0 && env != nullptr) {
      threads = std::atoi(env);
    }
    if (threads > 0) check(geoinv_set_threads(threads));

    if (rerun->parsed()) {
      return replay(manifest_path, out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir),
                    args);
    }

    Invocation inv;
    inv.command = app.get_subcommands().front()->get_name();
    inv.seed = seed;
    inv.out = out_dir;
    const bool uses_config = inv.command == "synth" || inv.command == "invert-map" ||
                             inv.command == "sample" || inv.command == "gl-diag";
    if (uses_config) {
      inv.config = load_config_file(config_path);
      if (!grid_path.empty()) inv.config["grid"] = parse_json(read_text(grid_path), "grid");
      if (lambda_gl) inv.config["map"]["lambda_gl"] = *lambda_gl;
      if (inv.config.contains("threads") && threads == 0) {
        check(geoinv_set_threads(inv.config.at("threads").get<int>()));
      }
    }
    if (inv.command == "forward") {
      inv.inputs = {{"rho", rho_path}, {"chi", chi_path}, {"like", like_path}};
    } else if (inv.command == "invert-map") {
      inv.inputs = {{"obs", obs_path}};
    } else if (inv.command == "sample") {
      inv.inputs = {{"obs", obs_path}};
      inv.params["chains"] = chains;
    } else if (inv.command == "metrics") {
      if (!tables_path.empty()) inv.inputs["tables"] = tables_path;
      if (!pred_path.empty()) inv.inputs["pred"] = pred_path;
      if (!obs_path.empty()) inv.inputs["obs"] = obs_path;
    }
    return execute(inv, args);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
