#include "geoinv/core/run_config.hpp"

#include <initializer_list>
#include <set>

#include <json.hpp>

#include "geoinv/core/error.hpp"
#include "geoinv/core/formats.hpp"

namespace geoinv {

namespace {

using nlohmann::json;

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(ErrorCode::Config, where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) fail(ErrorCode::Config, where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, where + "." + key + ": " + e.what());
  }
}

Vec3 read_vec3(const json& j, const std::string& where) {
  std::vector<double> v;
  try {
    v = j.get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, where + ": " + e.what());
  }
  if (v.size() != 3) fail(ErrorCode::Config, where + ": expected three numbers");
  return {v[0], v[1], v[2]};
}

Schedule read_schedule(const json& j, const std::string& where, Schedule fallback) {
  only_keys(j, where, {"name", "param"});
  std::string name = fallback.name();
  double param = fallback.param;
  read(j, "name", name, where);
  read(j, "param", param, where);
  return Schedule::from_name(name, param);
}

void read_gl(const json& j, GLParams& gl) {
  only_keys(j, "gl", {"kappa", "eps", "lambda0", "gamma", "lambda_gl"});
  read(j, "kappa", gl.kappa, "gl");
  read(j, "eps", gl.eps, "gl");
  read(j, "lambda0", gl.lambda0, "gl");
  read(j, "gamma", gl.gamma, "gl");
  read(j, "lambda_gl", gl.lambda_gl, "gl");
  try {
    gl.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("gl: ") + e.what());
  }
}

Body read_body(const json& j, const std::string& where) {
  only_keys(j, where, {"shape", "lo", "hi", "center", "radius", "rho", "chi"});
  Body b;
  std::string shape = "box";
  read(j, "shape", shape, where);
  if (shape == "box") {
    b.shape = Body::Shape::Box;
    if (!j.contains("lo") || !j.contains("hi")) fail(ErrorCode::Config, where + ": box needs lo and hi");
    b.lo = read_vec3(j.at("lo"), where + ".lo");
    b.hi = read_vec3(j.at("hi"), where + ".hi");
  } else if (shape == "sphere") {
    b.shape = Body::Shape::Sphere;
    if (!j.contains("center") || !j.contains("radius")) {
      fail(ErrorCode::Config, where + ": sphere needs center and radius");
    }
    b.center = read_vec3(j.at("center"), where + ".center");
    read(j, "radius", b.radius, where);
  } else {
    fail(ErrorCode::Config, where + ": unknown shape '" + shape + "'");
  }
  read(j, "rho", b.rho, where);
  read(j, "chi", b.chi, where);
  return b;
}

void read_scenario(const json& j, ScenarioSpec& s) {
  const std::string w = "scenario";
  only_keys(j, w, {"bodies", "host_rho", "survey_nx", "survey_ny", "survey_height", "snr",
                   "sigma_grav", "sigma_mag", "add_noise", "inclination_deg", "declination_deg",
                   "B0", "mode"});
  if (j.contains("bodies")) {
    if (!j.at("bodies").is_array()) fail(ErrorCode::Config, "scenario.bodies: expected an array");
    std::size_t k = 0;
    for (const json& b : j.at("bodies")) {
      s.bodies.push_back(read_body(b, w + ".bodies[" + std::to_string(k++) + "]"));
    }
  }
  read(j, "host_rho", s.host_rho, w);
  read(j, "survey_nx", s.survey_nx, w);
  read(j, "survey_ny", s.survey_ny, w);
  read(j, "survey_height", s.survey_height, w);
  read(j, "snr", s.snr, w);
  read(j, "sigma_grav", s.sigma_grav, w);
  read(j, "sigma_mag", s.sigma_mag, w);
  read(j, "add_noise", s.add_noise, w);
  read(j, "inclination_deg", s.magnetic.inclination_deg, w);
  read(j, "declination_deg", s.magnetic.declination_deg, w);
  read(j, "B0", s.magnetic.B0, w);
  std::string mode = "auto";
  read(j, "mode", mode, w);
  if (mode == "auto") {
    s.mode = EvalMode::Auto;
  } else if (mode == "dense") {
    s.mode = EvalMode::Dense;
  } else if (mode == "matrix_free") {
    s.mode = EvalMode::MatrixFree;
  } else {
    fail(ErrorCode::Config, "scenario.mode: unknown mode '" + mode + "'");
  }
}

void read_sampler(const json& j, SamplerConfig& c, SamplerModelConfig& m) {
  const std::string w = "sampler";
  only_keys(j, w, {"n_steps", "k_ref", "alpha_ref", "sigma_mag", "sigma_grav", "clamp_norm",
                   "gamma_schedule", "eta_schedule", "guidance_mode", "rho_scale", "chi_scale",
                   "chi_offset", "prior_mu", "prior_sigma0", "velocity_table", "guidance",
                   "normalise_step"});
  read(j, "n_steps", c.n_steps, w);
  read(j, "k_ref", c.k_ref, w);
  read(j, "alpha_ref", c.alpha_ref, w);
  read(j, "sigma_mag", c.sigma_mag, w);
  read(j, "sigma_grav", c.sigma_grav, w);
  read(j, "clamp_norm", c.clamp_norm, w);
  read(j, "normalise_step", c.normalise_step, w);
  if (j.contains("gamma_schedule")) {
    c.gamma_schedule = read_schedule(j.at("gamma_schedule"), w + ".gamma_schedule", c.gamma_schedule);
  }
  if (j.contains("eta_schedule")) {
    c.eta_schedule = read_schedule(j.at("eta_schedule"), w + ".eta_schedule", c.eta_schedule);
  }
  std::string mode = "velocity";
  read(j, "guidance_mode", mode, w);
  if (mode == "velocity") {
    c.guidance_mode = GuidanceMode::Velocity;
  } else if (mode == "refinement") {
    c.guidance_mode = GuidanceMode::Refinement;
  } else {
    fail(ErrorCode::Config, "sampler.guidance_mode: unknown mode '" + mode + "'");
  }
  read(j, "rho_scale", m.rho_scale, w);
  if (j.contains("chi_scale")) {
    double v = 0.0;
    read(j, "chi_scale", v, w);
    m.chi_scale = v;
  }
  if (j.contains("chi_offset")) {
    double v = 0.0;
    read(j, "chi_offset", v, w);
    m.chi_offset = v;
  }
  read(j, "prior_mu", m.prior_mu, w);
  read(j, "prior_sigma0", m.prior_sigma0, w);
  read(j, "velocity_table", m.velocity_table, w);
  read(j, "guidance", m.guidance, w);
  if (!(m.rho_scale > 0.0) || !(m.prior_sigma0 > 0.0) || (m.chi_scale && !(*m.chi_scale > 0.0))) {
    fail(ErrorCode::Config, "sampler: scales must be > 0");
  }
}

void read_map(const json& j, MapConfig& c) {
  const std::string w = "map";
  only_keys(j, w, {"lambda_gl", "lambda_tik", "max_iters", "grad_tol", "shrink",
                   "sufficient_decrease", "max_backtracks", "init", "restarts", "rho_init_scale",
                   "precondition"});
  read(j, "lambda_gl", c.lambda_gl, w);
  read(j, "lambda_tik", c.lambda_tik, w);
  read(j, "max_iters", c.max_iters, w);
  read(j, "grad_tol", c.grad_tol, w);
  read(j, "shrink", c.shrink, w);
  read(j, "sufficient_decrease", c.sufficient_decrease, w);
  read(j, "max_backtracks", c.max_backtracks, w);
  std::string init = to_string(c.init);
  read(j, "init", init, w);
  c.init = map_init_from_string(init);
  read(j, "restarts", c.restarts, w);
  read(j, "rho_init_scale", c.rho_init_scale, w);
  read(j, "precondition", c.precondition, w);
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("run config: ") + e.what());
  }
  only_keys(j, "run config",
            {"grid", "bounds", "gl", "scenario", "sampler", "map", "gl_diag", "threads"});
  RunConfig rc;
  try {
    if (j.contains("grid")) rc.grid = grid_from_json(j.at("grid").dump());
  } catch (const Error& e) {
    fail(ErrorCode::Config, e.what());
  }
  if (j.contains("bounds")) {
    only_keys(j.at("bounds"), "bounds", {"chi_min", "chi_max"});
    read(j.at("bounds"), "chi_min", rc.bounds.chi_min, "bounds");
    read(j.at("bounds"), "chi_max", rc.bounds.chi_max, "bounds");
    try {
      rc.bounds.validate();
    } catch (const Error& e) {
      fail(ErrorCode::Config, e.what());
    }
  }
  if (j.contains("gl")) read_gl(j.at("gl"), rc.gl);
  if (j.contains("scenario")) {
    read_scenario(j.at("scenario"), rc.scenario);
    rc.has_scenario = true;
  }
  if (j.contains("sampler")) read_sampler(j.at("sampler"), rc.sampler, rc.sampler_model);
  if (j.contains("map")) read_map(j.at("map"), rc.map);
  if (j.contains("gl_diag")) {
    only_keys(j.at("gl_diag"), "gl_diag", {"cells_per_width", "eps"});
    read(j.at("gl_diag"), "cells_per_width", rc.gl_diag.cells_per_width, "gl_diag");
    read(j.at("gl_diag"), "eps", rc.gl_diag.eps, "gl_diag");
  }
  if (j.contains("threads")) {
    int t = 0;
    read(j, "threads", t, "run config");
    if (t < 1) fail(ErrorCode::Config, "threads must be >= 1");
    rc.threads = t;
  }

  if (rc.grid) rc.scenario.grid = *rc.grid;
  rc.scenario.bounds = rc.bounds;
  rc.sampler.gl = rc.gl;
  rc.map.gl = rc.gl;
  try {
    rc.sampler.validate();
    rc.map.validate();
    if (rc.has_scenario) rc.scenario.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    fail(ErrorCode::Config, e.what());
  }
  return rc;
}

RunConfig RunConfig::load(const std::string& path) { return parse(read_file(path)); }

}  // namespace geoinv
