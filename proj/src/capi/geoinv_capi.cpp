#include "geoinv/geoinv.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoinv/core/error.hpp"
#include "geoinv/core/flow.hpp"
#include "geoinv/core/formats.hpp"
#include "geoinv/core/forward.hpp"
#include "geoinv/core/gl.hpp"
#include "geoinv/core/grid.hpp"
#include "geoinv/core/hash.hpp"
#include "geoinv/core/map_inversion.hpp"
#include "geoinv/core/metrics.hpp"
#include "geoinv/core/parallel.hpp"
#include "geoinv/core/run_config.hpp"
#include "geoinv/core/sampler.hpp"
#include "geoinv/core/scenario.hpp"

struct geoinv_config {
  geoinv::RunConfig rc;
};

struct geoinv_volume {
  geoinv::PropertyVolume v;
  std::string kind;
};

struct geoinv_fielddata {
  geoinv::FieldData d;
};

struct geoinv_map_result {
  geoinv::MapResult r;
  double gl_energy = 0.0;
  geoinv::GLParams gl;
};

struct geoinv_sample_set {
  std::vector<geoinv::SampleRecord> records;
  geoinv::VoxelGrid grid;
  geoinv::ChiBounds bounds;
  std::string config_hash;
};

namespace {

using geoinv::ErrorCode;
using nlohmann::json;

thread_local std::string g_last_error;

geoinv_status map_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return GEOINV_ERR_INVALID_ARGUMENT;
    case ErrorCode::InvalidBounds: return GEOINV_ERR_INVALID_BOUNDS;
    case ErrorCode::Domain: return GEOINV_ERR_DOMAIN;
    case ErrorCode::DimensionMismatch: return GEOINV_ERR_DIMENSION_MISMATCH;
    case ErrorCode::SingularGeometry: return GEOINV_ERR_SINGULAR_GEOMETRY;
    case ErrorCode::DegenerateCell: return GEOINV_ERR_DEGENERATE_CELL;
    case ErrorCode::NearField: return GEOINV_ERR_NEAR_FIELD;
    case ErrorCode::Resolution: return GEOINV_ERR_RESOLUTION;
    case ErrorCode::Numeric: return GEOINV_ERR_NUMERIC;
    case ErrorCode::Io: return GEOINV_ERR_IO;
    case ErrorCode::Format: return GEOINV_ERR_FORMAT;
    case ErrorCode::Config: return GEOINV_ERR_CONFIG;
  }
  return GEOINV_ERR_INTERNAL;
}

template <typename F>
geoinv_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return GEOINV_OK;
  } catch (const geoinv::Error& e) {
    g_last_error = e.what();
    return map_code(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GEOINV_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GEOINV_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) geoinv::fail(ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

geoinv_volume* wrap(geoinv::PropertyVolume v) {
  const std::string kind = geoinv::to_string(v.kind());
  return new geoinv_volume{std::move(v), kind};
}

const geoinv::VoxelGrid& config_grid(const geoinv_config* cfg) {
  if (!cfg->rc.grid) geoinv::fail(ErrorCode::Config, "run config has no grid section");
  return *cfg->rc.grid;
}

std::vector<double> clip_nonneg(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v = std::max(v, 0.0);
  return out;
}

json record_json(const geoinv::SampleRecord& r) {
  json steps = json::array();
  for (const geoinv::StepDiagnostics& s : r.steps) {
    json j;
    j["t"] = s.t;
    j["data_misfit"] = s.data_misfit;
    j["gl_energy"] = std::isfinite(s.gl_energy) ? json(s.gl_energy) : json(nullptr);
    j["guidance_norm"] = s.guidance_norm;
    j["clamped"] = s.clamped;
    steps.push_back(std::move(j));
  }
  json j;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["alpha"] = r.alpha;
  j["aborted"] = r.aborted;
  if (r.aborted) {
    j["abort_step"] = r.abort_step;
    j["abort_reason"] = r.abort_reason;
  }
  j["steps"] = std::move(steps);
  return j;
}

}  // namespace

extern "C" {

const char* geoinv_version(void) { return "0.1.0"; }

const char* geoinv_last_error(void) { return g_last_error.c_str(); }

const char* geoinv_status_name(geoinv_status status) {
  switch (status) {
    case GEOINV_OK: return "ok";
    case GEOINV_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case GEOINV_ERR_INVALID_BOUNDS: return "invalid-bounds";
    case GEOINV_ERR_DOMAIN: return "domain";
    case GEOINV_ERR_DIMENSION_MISMATCH: return "dimension-mismatch";
    case GEOINV_ERR_SINGULAR_GEOMETRY: return "singular-geometry";
    case GEOINV_ERR_DEGENERATE_CELL: return "degenerate-cell";
    case GEOINV_ERR_NEAR_FIELD: return "near-field";
    case GEOINV_ERR_RESOLUTION: return "resolution";
    case GEOINV_ERR_NUMERIC: return "numeric";
    case GEOINV_ERR_IO: return "io";
    case GEOINV_ERR_FORMAT: return "format";
    case GEOINV_ERR_CONFIG: return "config";
    case GEOINV_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void geoinv_string_free(char* s) { std::free(s); }

geoinv_status geoinv_set_threads(int n) {
  return guarded([&] {
    if (n < 1) geoinv::fail(ErrorCode::InvalidArgument, "thread count must be >= 1");
    geoinv::set_thread_count(n);
  });
}

geoinv_status geoinv_config_parse(const char* json_text, geoinv_config** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = new geoinv_config{geoinv::RunConfig::parse(json_text)};
  });
}

void geoinv_config_free(geoinv_config* cfg) { delete cfg; }

geoinv_status geoinv_config_sampler_hash(const geoinv_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = dup_string(cfg->rc.sampler.hash());
  });
}

geoinv_status geoinv_volume_create(size_t nx, size_t ny, size_t nz, double h,
                                   const double origin[3], const char* kind, const double* values,
                                   size_t n, geoinv_volume** out) {
  return guarded([&] {
    require(kind, "kind");
    require(out, "out");
    if (n > 0) require(values, "values");
    geoinv::Vec3 o{};
    if (origin != nullptr) o = {origin[0], origin[1], origin[2]};
    const geoinv::VoxelGrid g(nx, ny, nz, h, o);
    *out = wrap(geoinv::PropertyVolume(g, geoinv::property_kind_from_string(kind),
                                       std::vector<double>(values, values + n)));
  });
}

geoinv_status geoinv_volume_read(const char* path, geoinv_volume** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = wrap(geoinv::read_volume(path));
  });
}

geoinv_status geoinv_volume_write(const geoinv_volume* v, const char* path) {
  return guarded([&] {
    require(v, "volume");
    require(path, "path");
    geoinv::write_volume(path, v->v);
  });
}

void geoinv_volume_free(geoinv_volume* v) { delete v; }

geoinv_status geoinv_volume_shape(const geoinv_volume* v, size_t* nx, size_t* ny, size_t* nz,
                                  double* h) {
  return guarded([&] {
    require(v, "volume");
    const geoinv::VoxelGrid& g = v->v.grid();
    if (nx) *nx = g.nx();
    if (ny) *ny = g.ny();
    if (nz) *nz = g.nz();
    if (h) *h = g.h();
  });
}

geoinv_status geoinv_volume_values(const geoinv_volume* v, const double** data, size_t* n) {
  return guarded([&] {
    require(v, "volume");
    require(data, "data");
    require(n, "n");
    *data = v->v.values().data();
    *n = v->v.size();
  });
}

const char* geoinv_volume_kind(const geoinv_volume* v) { return v ? v->kind.c_str() : ""; }

geoinv_status geoinv_fielddata_read(const char* path, geoinv_fielddata** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new geoinv_fielddata{geoinv::read_field_data(path)};
  });
}

geoinv_status geoinv_fielddata_write(const geoinv_fielddata* d, const char* path) {
  return guarded([&] {
    require(d, "fielddata");
    require(path, "path");
    geoinv::write_field_data(path, d->d);
  });
}

void geoinv_fielddata_free(geoinv_fielddata* d) { delete d; }

geoinv_status geoinv_fielddata_size(const geoinv_fielddata* d, size_t* n_stations) {
  return guarded([&] {
    require(d, "fielddata");
    require(n_stations, "n_stations");
    *n_stations = d->d.survey.size();
  });
}

geoinv_status geoinv_fielddata_grav(const geoinv_fielddata* d, const double** data, size_t* n) {
  return guarded([&] {
    require(d, "fielddata");
    require(data, "data");
    require(n, "n");
    *data = d->d.grav.data();
    *n = d->d.grav.size();
  });
}

geoinv_status geoinv_fielddata_mag(const geoinv_fielddata* d, const double** data, size_t* n) {
  return guarded([&] {
    require(d, "fielddata");
    require(data, "data");
    require(n, "n");
    *data = d->d.mag.data();
    *n = d->d.mag.size();
  });
}

geoinv_status geoinv_survey_write(const geoinv_fielddata* d, const char* path) {
  return guarded([&] {
    require(d, "fielddata");
    require(path, "path");
    geoinv::write_survey(path, d->d.survey);
  });
}

geoinv_status geoinv_synthesize(const geoinv_config* cfg, uint64_t seed, geoinv_volume** rho,
                                geoinv_volume** chi, geoinv_volume** labels,
                                geoinv_fielddata** data) {
  return guarded([&] {
    require(cfg, "cfg");
    geoinv::ScenarioSpec spec = cfg->rc.scenario;
    spec.grid = config_grid(cfg);
    spec.bounds = cfg->rc.bounds;
    const geoinv::Scenario sc = geoinv::generate_scenario(spec, seed);
    std::vector<double> lab(sc.labels.size());
    for (std::size_t i = 0; i < lab.size(); ++i) lab[i] = sc.labels[i] ? 1.0 : -1.0;
    std::unique_ptr<geoinv_volume> r(wrap(sc.truth.rho()));
    std::unique_ptr<geoinv_volume> c(wrap(sc.truth.chi()));
    std::unique_ptr<geoinv_volume> l(
        wrap(geoinv::PropertyVolume(spec.grid, geoinv::PropertyKind::Phase, std::move(lab))));
    std::unique_ptr<geoinv_fielddata> d(new geoinv_fielddata{sc.data});
    if (rho) *rho = r.release();
    if (chi) *chi = c.release();
    if (labels) *labels = l.release();
    if (data) *data = d.release();
  });
}

geoinv_status geoinv_forward(const geoinv_volume* rho, const geoinv_volume* chi,
                             const geoinv_fielddata* like, geoinv_fielddata** out) {
  return guarded([&] {
    require(rho, "rho");
    require(chi, "chi");
    require(like, "like");
    require(out, "out");
    const geoinv::JointModel m(rho->v, chi->v);
    const geoinv::FieldData& ref = like->d;
    const geoinv::JointOperator op =
        geoinv::assemble_joint_operator(m.grid(), ref.survey, ref.gravity, ref.magnetic);
    const std::vector<double> y = op.apply(geoinv::stack(m));
    const auto split = y.begin() + static_cast<std::ptrdiff_t>(ref.survey.size());
    geoinv::FieldData fd{ref.survey, {y.begin(), split}, {split, y.end()}, ref.noise, ref.gravity,
                         ref.magnetic};
    fd.validate();
    *out = new geoinv_fielddata{std::move(fd)};
  });
}

geoinv_status geoinv_rmse(const double* pred, const double* obs, size_t n, double* out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) {
      require(pred, "pred");
      require(obs, "obs");
    }
    *out = geoinv::rmse(std::span<const double>(pred, n), std::span<const double>(obs, n));
  });
}

geoinv_status geoinv_fielddata_rmse(const geoinv_fielddata* pred, const geoinv_fielddata* obs,
                                    double* rmse_grav, double* rmse_mag) {
  return guarded([&] {
    require(pred, "pred");
    require(obs, "obs");
    if (!(pred->d.survey == obs->d.survey)) {
      geoinv::fail(ErrorCode::DimensionMismatch, "predicted and observed surveys differ");
    }
    if (rmse_grav) *rmse_grav = geoinv::rmse(pred->d.grav, obs->d.grav);
    if (rmse_mag) *rmse_mag = geoinv::rmse(pred->d.mag, obs->d.mag);
  });
}

geoinv_status geoinv_metrics_report(const char* tables_json, char** out_json) {
  return guarded([&] {
    require(tables_json, "tables_json");
    require(out_json, "out_json");
    json j;
    std::vector<double> baseline;
    std::vector<geoinv::MethodTable> methods;
    try {
      j = json::parse(tables_json);
      for (const auto& [key, value] : j.items()) {
        if (key != "baseline" && key != "methods") {
          geoinv::fail(ErrorCode::Config, "metrics tables: unknown key '" + key + "'");
        }
      }
      baseline = j.at("baseline").get<std::vector<double>>();
      for (const auto& [name, table] : j.at("methods").items()) {
        methods.push_back({name, table.get<std::vector<double>>()});
      }
    } catch (const json::exception& e) {
      geoinv::fail(ErrorCode::Format, std::string("metrics tables: ") + e.what());
    }
    const geoinv::MetricsReport r = geoinv::delta_rmse_and_ranks(baseline, methods);
    json out;
    out["methods"] = json::object();
    for (std::size_t k = 0; k < r.names.size(); ++k) {
      json m;
      m["delta_rmse"] = r.delta[k];
      std::vector<std::string> ranks;
      for (geoinv::Rank rk : r.ranks[k]) ranks.push_back(geoinv::to_string(rk));
      m["ranks"] = ranks;
      m["win_rate"] = r.win_rate[k];
      m["worst_rate"] = r.worst_rate[k];
      m["mixed_rate"] = r.mixed_rate[k];
      out["methods"][r.names[k]] = std::move(m);
    }
    *out_json = dup_string(out.dump(2));
  });
}

geoinv_status geoinv_invert_map(const geoinv_config* cfg, const geoinv_fielddata* data,
                                uint64_t seed, geoinv_map_result** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data, "data");
    require(out, "out");
    const geoinv::VoxelGrid& grid = config_grid(cfg);
    geoinv::MapConfig mc = cfg->rc.map;
    mc.seed = seed;
    const geoinv::FieldData& fd = data->d;
    const geoinv::JointOperator op =
        geoinv::assemble_joint_operator(grid, fd.survey, fd.gravity, fd.magnetic);
    geoinv::MapResult r = geoinv::invert_map(fd, op, grid, cfg->rc.bounds, mc);
    const std::vector<double> phi = geoinv::chi_to_phi(r.model.chi().values(), cfg->rc.bounds);
    const double e_gl = geoinv::gl_energy(grid, phi, mc.gl);
    *out = new geoinv_map_result{std::move(r), e_gl, mc.gl};
  });
}

void geoinv_map_result_free(geoinv_map_result* r) { delete r; }

geoinv_status geoinv_map_result_model(const geoinv_map_result* r, geoinv_volume** rho,
                                      geoinv_volume** chi) {
  return guarded([&] {
    require(r, "result");
    std::unique_ptr<geoinv_volume> a(wrap(r->r.model.rho()));
    std::unique_ptr<geoinv_volume> b(wrap(r->r.model.chi()));
    if (rho) *rho = a.release();
    if (chi) *chi = b.release();
  });
}

geoinv_status geoinv_map_result_trace_csv(const geoinv_map_result* r, char** out) {
  return guarded([&] {
    require(r, "result");
    require(out, "out");
    std::string csv = "restart,iter,energy,grad_norm,step,backtracks\n";
    for (std::size_t k = 0; k < r->r.runs.size(); ++k) {
      for (const geoinv::MapTraceRow& row : r->r.runs[k].trace) {
        csv += std::to_string(k) + "," + std::to_string(row.iter) + "," +
               geoinv::format_double(row.energy) + "," + geoinv::format_double(row.grad_norm) +
               "," + geoinv::format_double(row.step) + "," + std::to_string(row.backtracks) + "\n";
      }
    }
    *out = dup_string(csv);
  });
}

geoinv_status geoinv_map_result_summary_json(const geoinv_map_result* r, char** out) {
  return guarded([&] {
    require(r, "result");
    require(out, "out");
    json j;
    j["best_restart"] = r->r.best;
    j["gl_energy"] = r->gl_energy;
    json runs = json::array();
    for (const geoinv::MapRun& run : r->r.runs) {
      json x;
      x["energy"] = std::isfinite(run.energy) ? json(run.energy) : json(nullptr);
      x["iterations"] = run.trace.empty() ? 0 : run.trace.back().iter;
      x["converged"] = run.converged;
      x["aborted"] = run.aborted;
      if (run.aborted) x["abort_reason"] = run.abort_reason;
      runs.push_back(std::move(x));
    }
    j["runs"] = std::move(runs);
    *out = dup_string(j.dump(2));
  });
}

geoinv_status geoinv_sample(const geoinv_config* cfg, const geoinv_fielddata* data,
                            size_t n_chains, uint64_t seed, geoinv_sample_set** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(data, "data");
    require(out, "out");
    if (n_chains == 0) geoinv::fail(ErrorCode::InvalidArgument, "need at least one chain");
    const geoinv::RunConfig& rc = cfg->rc;
    const geoinv::VoxelGrid& grid = config_grid(cfg);
    const geoinv::SamplerModelConfig& sm = rc.sampler_model;
    const std::size_t n = grid.size();

    const double chi_scale = sm.chi_scale.value_or(rc.bounds.half_range());
    const double chi_offset = sm.chi_offset.value_or(rc.bounds.midpoint());
    std::vector<double> scale(2 * n, sm.rho_scale);
    std::vector<double> offset(2 * n, 0.0);
    std::fill(scale.begin() + static_cast<std::ptrdiff_t>(n), scale.end(), chi_scale);
    std::fill(offset.begin() + static_cast<std::ptrdiff_t>(n), offset.end(), chi_offset);
    const geoinv::DiagonalAffineDecoder dec(std::move(scale), std::move(offset), {n, n});

    std::unique_ptr<geoinv::VelocityField> vel;
    if (!sm.velocity_table.empty()) {
      vel = std::make_unique<geoinv::TabulatedVelocity>(
          geoinv::TabulatedVelocity::from_file(sm.velocity_table));
    } else {
      vel = std::make_unique<geoinv::GaussianPriorVelocity>(std::vector<double>(2 * n, sm.prior_mu),
                                                            sm.prior_sigma0);
    }

    const geoinv::FieldData& fd = data->d;
    const geoinv::JointOperator op =
        geoinv::assemble_joint_operator(grid, fd.survey, fd.gravity, fd.magnetic);
    const geoinv::Observation obs = geoinv::joint_observation(fd, rc.sampler);
    const geoinv::GuidanceContext ctx{grid, rc.bounds};
    const bool guided = sm.guidance && rc.sampler.gl.lambda0 > 0.0;
    auto set = std::make_unique<geoinv_sample_set>(geoinv_sample_set{
        geoinv::sample_chains(obs, *vel, dec, op, rc.sampler, guided ? &ctx : nullptr, n_chains,
                              seed),
        grid, rc.bounds, rc.sampler.hash()});
    *out = set.release();
  });
}

void geoinv_sample_set_free(geoinv_sample_set* s) { delete s; }

size_t geoinv_sample_set_count(const geoinv_sample_set* s) { return s ? s->records.size() : 0; }

int geoinv_sample_set_aborted(const geoinv_sample_set* s, size_t chain) {
  if (s == nullptr || chain >= s->records.size()) return -1;
  return s->records[chain].aborted ? 1 : 0;
}

geoinv_status geoinv_sample_set_volumes(const geoinv_sample_set* s, size_t chain,
                                        geoinv_volume** rho, geoinv_volume** chi,
                                        geoinv_volume** phi) {
  return guarded([&] {
    require(s, "sample set");
    if (chain >= s->records.size()) geoinv::fail(ErrorCode::InvalidArgument, "chain index out of range");
    const geoinv::SampleRecord& r = s->records[chain];
    if (r.aborted) geoinv::fail(ErrorCode::Numeric, "chain " + std::to_string(chain) + " aborted");
    const std::size_t n = s->grid.size();
    const std::span<const double> x(r.decoded);
    std::unique_ptr<geoinv_volume> a(wrap(geoinv::PropertyVolume(
        s->grid, geoinv::PropertyKind::Density, {x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n)})));
    std::unique_ptr<geoinv_volume> b(wrap(geoinv::PropertyVolume(
        s->grid, geoinv::PropertyKind::Susceptibility, clip_nonneg(x.subspan(n, n)))));
    std::unique_ptr<geoinv_volume> c(wrap(geoinv::PropertyVolume(
        s->grid, geoinv::PropertyKind::Phase, geoinv::chi_to_phi(x.subspan(n, n), s->bounds))));
    if (rho) *rho = a.release();
    if (chi) *chi = b.release();
    if (phi) *phi = c.release();
  });
}

geoinv_status geoinv_sample_set_diagnostics_json(const geoinv_sample_set* s, size_t chain,
                                                 char** out) {
  return guarded([&] {
    require(s, "sample set");
    require(out, "out");
    if (chain >= s->records.size()) geoinv::fail(ErrorCode::InvalidArgument, "chain index out of range");
    *out = dup_string(record_json(s->records[chain]).dump(2));
  });
}

geoinv_status geoinv_sample_set_moments(const geoinv_sample_set* s, geoinv_volume** mean_rho,
                                        geoinv_volume** mean_chi, geoinv_volume** std_rho,
                                        geoinv_volume** std_chi) {
  return guarded([&] {
    require(s, "sample set");
    const std::size_t n = s->grid.size();
    std::vector<double> mean(2 * n, 0.0);
    std::vector<double> sq(2 * n, 0.0);
    std::size_t k = 0;
    for (const geoinv::SampleRecord& r : s->records) {
      if (r.aborted) continue;
      ++k;
      for (std::size_t i = 0; i < 2 * n; ++i) {
        const double d = r.decoded[i] - mean[i];
        mean[i] += d / static_cast<double>(k);
        sq[i] += d * (r.decoded[i] - mean[i]);
      }
    }
    if (k == 0) geoinv::fail(ErrorCode::Numeric, "every chain aborted");
    std::vector<double> sd(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) sd[i] = std::sqrt(sq[i] / static_cast<double>(k));
    const auto part = [&](const std::vector<double>& v, std::size_t off) {
      return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(off),
                                 v.begin() + static_cast<std::ptrdiff_t>(off + n));
    };
    using geoinv::PropertyKind;
    std::unique_ptr<geoinv_volume> a(wrap(geoinv::PropertyVolume(s->grid, PropertyKind::Density, part(mean, 0))));
    std::unique_ptr<geoinv_volume> b(
        wrap(geoinv::PropertyVolume(s->grid, PropertyKind::Susceptibility, clip_nonneg(part(mean, n)))));
    std::unique_ptr<geoinv_volume> c(wrap(geoinv::PropertyVolume(s->grid, PropertyKind::Density, part(sd, 0))));
    std::unique_ptr<geoinv_volume> d(
        wrap(geoinv::PropertyVolume(s->grid, PropertyKind::Susceptibility, part(sd, n))));
    if (mean_rho) *mean_rho = a.release();
    if (mean_chi) *mean_chi = b.release();
    if (std_rho) *std_rho = c.release();
    if (std_chi) *std_chi = d.release();
  });
}

geoinv_status geoinv_sample_set_summary_json(const geoinv_sample_set* s, char** out) {
  return guarded([&] {
    require(s, "sample set");
    require(out, "out");
    json j;
    j["config_hash"] = s->config_hash;
    j["n_chains"] = s->records.size();
    std::vector<std::size_t> aborted;
    std::vector<double> misfit;
    std::size_t clamps = 0;
    std::size_t steps = 0;
    for (std::size_t c = 0; c < s->records.size(); ++c) {
      const geoinv::SampleRecord& r = s->records[c];
      for (const geoinv::StepDiagnostics& d : r.steps) clamps += d.clamped ? 1 : 0;
      steps += r.steps.size();
      if (r.aborted) {
        aborted.push_back(c);
      } else if (!r.steps.empty()) {
        misfit.push_back(r.steps.back().data_misfit);
      }
    }
    j["aborted_chains"] = aborted;
    j["clamp_activation_rate"] = steps ? static_cast<double>(clamps) / static_cast<double>(steps) : 0.0;
    if (!misfit.empty()) {
      double sum = 0.0;
      for (double m : misfit) sum += m;
      j["final_misfit"] = {{"mean", sum / static_cast<double>(misfit.size())},
                           {"min", *std::min_element(misfit.begin(), misfit.end())},
                           {"max", *std::max_element(misfit.begin(), misfit.end())}};
    }
    *out = dup_string(j.dump(2));
  });
}

geoinv_status geoinv_gl_diagnostic(const geoinv_config* cfg, char** out_csv) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_csv, "out_csv");
    const geoinv::GlDiagConfig& d = cfg->rc.gl_diag;
    const std::vector<geoinv::InterfaceEnergy> rows =
        geoinv::interface_energy_diagnostic(d.cells_per_width, d.eps);
    std::string csv = "eps,energy,c0_gap\n";
    for (const geoinv::InterfaceEnergy& r : rows) {
      const double gap = std::abs(r.energy - geoinv::kModicaMortolaC0) / geoinv::kModicaMortolaC0;
      csv += geoinv::format_double(r.eps) + "," + geoinv::format_double(r.energy) + "," +
             geoinv::format_double(gap) + "\n";
    }
    *out_csv = dup_string(csv);
  });
}

geoinv_status geoinv_file_sha256(const char* path, char out[65]) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    const std::string h = geoinv::sha256_file(path);
    std::memcpy(out, h.c_str(), 65);
  });
}

}  // extern "C"
