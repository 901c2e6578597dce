#include "geoinv/core/scenario.hpp"

#include <cmath>

#include "geoinv/core/error.hpp"

namespace geoinv {

namespace {

double block_rms(const std::vector<double>& y, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += y[i] * y[i];
  return std::sqrt(s / static_cast<double>(end - begin));
}

bool inside(const Box& outer, const Box& inner) {
  return inner.lo.x >= outer.lo.x && inner.lo.y >= outer.lo.y && inner.lo.z >= outer.lo.z &&
         inner.hi.x <= outer.hi.x && inner.hi.y <= outer.hi.y && inner.hi.z <= outer.hi.z;
}

}  // namespace

bool Body::contains(const Vec3& p) const noexcept {
  if (shape == Shape::Box) {
    return p.x >= lo.x && p.x < hi.x && p.y >= lo.y && p.y < hi.y && p.z >= lo.z && p.z < hi.z;
  }
  const double dx = p.x - center.x;
  const double dy = p.y - center.y;
  const double dz = p.z - center.z;
  return dx * dx + dy * dy + dz * dz < radius * radius;
}

Box Body::extent() const noexcept {
  if (shape == Shape::Box) return {lo, hi};
  return {{center.x - radius, center.y - radius, center.z - radius},
          {center.x + radius, center.y + radius, center.z + radius}};
}

void ScenarioSpec::validate() const {
  bounds.validate();
  gravity.validate();
  magnetic.validate();
  if (survey_nx == 0 || survey_ny == 0) fail(ErrorCode::Config, "survey needs >= 1 station per axis");
  if (!(survey_height >= 0.0)) fail(ErrorCode::Config, "survey height must be >= 0");
  if (!(snr >= 0.0) || !std::isfinite(snr)) fail(ErrorCode::Config, "snr must be >= 0");
  if (!(sigma_grav > 0.0) || !(sigma_mag > 0.0)) fail(ErrorCode::Config, "noise sigmas must be > 0");
  const Box g = grid.bounds();
  for (std::size_t k = 0; k < bodies.size(); ++k) {
    const Body& b = bodies[k];
    if (b.shape == Body::Shape::Box &&
        !(b.hi.x > b.lo.x && b.hi.y > b.lo.y && b.hi.z > b.lo.z)) {
      fail(ErrorCode::Config, "body " + std::to_string(k) + " has an empty box");
    }
    if (b.shape == Body::Shape::Sphere && !(b.radius > 0.0)) {
      fail(ErrorCode::Config, "body " + std::to_string(k) + " needs a positive radius");
    }
    if (!inside(g, b.extent())) {
      fail(ErrorCode::InvalidArgument, "body " + std::to_string(k) + " lies outside the grid");
    }
    if (!(b.chi >= 0.0) || !std::isfinite(b.rho)) {
      fail(ErrorCode::Config, "body " + std::to_string(k) + " has invalid properties");
    }
  }
}

JointModel rasterise(const ScenarioSpec& spec, std::vector<std::uint8_t>* labels) {
  spec.validate();
  const std::size_t n = spec.grid.size();
  std::vector<double> rho(n, spec.host_rho);
  std::vector<double> chi(n, spec.bounds.chi_min);
  std::vector<std::uint8_t> lab(n, 0);
  for (const Body& b : spec.bodies) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!b.contains(spec.grid.cell_center(i))) continue;
      rho[i] = b.rho;
      chi[i] = b.chi;
      lab[i] = b.chi > spec.bounds.chi_min ? 1 : 0;
    }
  }
  if (labels != nullptr) *labels = std::move(lab);
  return JointModel(PropertyVolume(spec.grid, PropertyKind::Density, std::move(rho)),
                    PropertyVolume(spec.grid, PropertyKind::Susceptibility, std::move(chi)));
}

Scenario generate_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  std::vector<std::uint8_t> labels;
  JointModel truth = rasterise(spec, &labels);
  const double height = spec.survey_height > 0.0 ? spec.survey_height : 2.0 * spec.grid.h();
  SurveyGeometry survey = regular_survey(spec.grid, spec.survey_nx, spec.survey_ny, height);
  const JointOperator op =
      assemble_joint_operator(spec.grid, survey, spec.gravity, spec.magnetic, spec.mode);

  const std::vector<double> clean = op.apply(stack(truth));
  const std::size_t ns = survey.size();
  double sg = spec.sigma_grav;
  double sm = spec.sigma_mag;
  if (spec.snr > 0.0) {
    const double rg = block_rms(clean, 0, ns);
    const double rm = block_rms(clean, ns, 2 * ns);
    if (rg > 0.0) sg = rg / spec.snr;
    if (rm > 0.0) sm = rm / spec.snr;
  }
  const NoiseModel noise = NoiseModel::broadcast(ns, sg, ns, sm);
  FieldData data{survey, {}, {}, noise, spec.gravity, spec.magnetic};
  if (spec.add_noise) {
    data = simulate(op, truth, noise, survey, spec.gravity, spec.magnetic, seed);
  } else {
    data.grav.assign(clean.begin(), clean.begin() + static_cast<std::ptrdiff_t>(ns));
    data.mag.assign(clean.begin() + static_cast<std::ptrdiff_t>(ns), clean.end());
    data.validate();
  }
  return Scenario{spec, std::move(truth), std::move(data), clean, std::move(labels), seed};
}

}  // namespace geoinv
