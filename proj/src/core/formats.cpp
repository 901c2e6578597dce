#include "geoinv/core/formats.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include <json.hpp>

#include "geoinv/core/error.hpp"

namespace geoinv {

namespace {

using nlohmann::json;

void append_f64(std::string& out, std::span<const double> xs) {
  const std::size_t at = out.size();
  out.resize(at + 8 * xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(xs[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(out.data() + at + 8 * i, &bits, 8);
  }
}

std::vector<double> read_f64(std::string_view bytes, std::size_t count) {
  if (bytes.size() < 8 * count) fail(ErrorCode::Format, "payload shorter than the header declares");
  std::vector<double> xs(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes.data() + 8 * i, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    xs[i] = std::bit_cast<double>(bits);
  }
  return xs;
}

struct Split {
  json header;
  std::string_view payload;
};

Split split_header(const std::string& bytes, const char* magic) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) fail(ErrorCode::Format, std::string(magic) + ": missing header line");
  Split s;
  try {
    s.header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string(magic) + ": bad header: " + e.what());
  }
  if (!s.header.is_object() || s.header.value("magic", "") != magic) {
    fail(ErrorCode::Format, std::string("expected a ") + magic + " file");
  }
  s.payload = std::string_view(bytes).substr(nl + 1);
  return s;
}

void check_payload(const Split& s, std::size_t count, const char* magic) {
  if (s.payload.size() != 8 * count) {
    fail(ErrorCode::Format, std::string(magic) + ": payload size does not match the header");
  }
}

template <typename T>
T field(const json& j, const char* key, const char* magic) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string(magic) + ": header field '" + key + "': " + e.what());
  }
}

std::vector<double> sigma_field(const json& j, const char* key, std::size_t n) {
  const json& v = j.at(key);
  if (v.is_number()) return std::vector<double>(n, v.get<double>());
  auto xs = v.get<std::vector<double>>();
  if (xs.size() != n) fail(ErrorCode::Format, std::string("FDAT1: '") + key + "' length mismatch");
  return xs;
}

json sigma_json(const std::vector<double>& s) {
  if (!s.empty() && std::all_of(s.begin(), s.end(), [&](double v) { return v == s.front(); })) {
    return s.front();
  }
  return s;
}

}  // namespace

void atomic_write(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.parent_path() /
                       (target.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorCode::Io, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::Io, "cannot rename onto '" + path + "'");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_volume(const PropertyVolume& v) {
  const VoxelGrid& g = v.grid();
  json h;
  h["magic"] = "PVOL1";
  h["kind"] = to_string(v.kind());
  h["nx"] = g.nx();
  h["ny"] = g.ny();
  h["nz"] = g.nz();
  h["h"] = g.h();
  h["origin"] = {g.origin().x, g.origin().y, g.origin().z};
  std::string out = h.dump() + "\n";
  append_f64(out, v.values());
  return out;
}

PropertyVolume decode_volume(const std::string& bytes) {
  const Split s = split_header(bytes, "PVOL1");
  const auto origin = field<std::vector<double>>(s.header, "origin", "PVOL1");
  if (origin.size() != 3) fail(ErrorCode::Format, "PVOL1: origin must have three entries");
  const VoxelGrid g(field<std::size_t>(s.header, "nx", "PVOL1"), field<std::size_t>(s.header, "ny", "PVOL1"),
                    field<std::size_t>(s.header, "nz", "PVOL1"), field<double>(s.header, "h", "PVOL1"),
                    {origin[0], origin[1], origin[2]});
  check_payload(s, g.size(), "PVOL1");
  return PropertyVolume(g, property_kind_from_string(field<std::string>(s.header, "kind", "PVOL1")),
                        read_f64(s.payload, g.size()));
}

void write_volume(const std::string& path, const PropertyVolume& v) {
  atomic_write(path, encode_volume(v));
}

PropertyVolume read_volume(const std::string& path) { return decode_volume(read_file(path)); }

std::string encode_survey(const SurveyGeometry& s) {
  json h;
  h["magic"] = "SURV1";
  h["n"] = s.size();
  std::string out = h.dump() + "\n";
  std::vector<double> xyz;
  xyz.reserve(3 * s.size());
  for (const Vec3& p : s.points()) xyz.insert(xyz.end(), {p.x, p.y, p.z});
  append_f64(out, xyz);
  return out;
}

SurveyGeometry decode_survey(const std::string& bytes) {
  const Split s = split_header(bytes, "SURV1");
  const auto n = field<std::size_t>(s.header, "n", "SURV1");
  check_payload(s, 3 * n, "SURV1");
  const std::vector<double> xyz = read_f64(s.payload, 3 * n);
  std::vector<Vec3> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
  return SurveyGeometry(std::move(pts));
}

void write_survey(const std::string& path, const SurveyGeometry& s) {
  atomic_write(path, encode_survey(s));
}

SurveyGeometry read_survey(const std::string& path) { return decode_survey(read_file(path)); }

std::string encode_field_data(const FieldData& d) {
  d.validate();
  json h;
  h["magic"] = "FDAT1";
  h["n_grav"] = d.grav.size();
  h["n_mag"] = d.mag.size();
  h["n_survey"] = d.survey.size();
  h["grav_unit"] = d.gravity.unit == GravityUnit::MilliGal ? "mGal" : "m/s^2";
  h["mag_unit"] = "nT";
  h["G"] = d.gravity.G;
  h["sigma_grav"] = sigma_json(d.noise.sigma_grav);
  h["sigma_mag"] = sigma_json(d.noise.sigma_mag);
  h["inclination_deg"] = d.magnetic.inclination_deg;
  h["declination_deg"] = d.magnetic.declination_deg;
  h["B0"] = d.magnetic.B0;
  std::string out = h.dump() + "\n";
  append_f64(out, d.grav);
  append_f64(out, d.mag);
  std::vector<double> xyz;
  xyz.reserve(3 * d.survey.size());
  for (const Vec3& p : d.survey.points()) xyz.insert(xyz.end(), {p.x, p.y, p.z});
  append_f64(out, xyz);
  return out;
}

FieldData decode_field_data(const std::string& bytes) {
  const Split s = split_header(bytes, "FDAT1");
  const auto ng = field<std::size_t>(s.header, "n_grav", "FDAT1");
  const auto nm = field<std::size_t>(s.header, "n_mag", "FDAT1");
  const auto ns = field<std::size_t>(s.header, "n_survey", "FDAT1");
  check_payload(s, ng + nm + 3 * ns, "FDAT1");
  const std::vector<double> all = read_f64(s.payload, ng + nm + 3 * ns);
  std::vector<Vec3> pts(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    const std::size_t at = ng + nm + 3 * i;
    pts[i] = {all[at], all[at + 1], all[at + 2]};
  }
  GravityKernelConfig gcfg;
  gcfg.G = field<double>(s.header, "G", "FDAT1");
  const auto unit = field<std::string>(s.header, "grav_unit", "FDAT1");
  if (unit == "mGal") {
    gcfg.unit = GravityUnit::MilliGal;
  } else if (unit == "m/s^2") {
    gcfg.unit = GravityUnit::SI;
  } else {
    fail(ErrorCode::Format, "FDAT1: unknown gravity unit '" + unit + "'");
  }
  MagneticKernelConfig mcfg;
  mcfg.inclination_deg = field<double>(s.header, "inclination_deg", "FDAT1");
  mcfg.declination_deg = field<double>(s.header, "declination_deg", "FDAT1");
  mcfg.B0 = field<double>(s.header, "B0", "FDAT1");
  NoiseModel noise;
  try {
    noise.sigma_grav = sigma_field(s.header, "sigma_grav", ng);
    noise.sigma_mag = sigma_field(s.header, "sigma_mag", nm);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("FDAT1: sigma fields: ") + e.what());
  }
  FieldData d{SurveyGeometry(std::move(pts)),
              {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(ng)},
              {all.begin() + static_cast<std::ptrdiff_t>(ng),
               all.begin() + static_cast<std::ptrdiff_t>(ng + nm)},
              std::move(noise),
              gcfg,
              mcfg};
  d.validate();
  return d;
}

void write_field_data(const std::string& path, const FieldData& d) {
  atomic_write(path, encode_field_data(d));
}

FieldData read_field_data(const std::string& path) { return decode_field_data(read_file(path)); }

VoxelGrid grid_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("grid: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::Format, "grid: expected a JSON object");
  static const std::set<std::string> known{"nx", "ny", "nz", "h", "origin"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(ErrorCode::Config, "grid: unknown key '" + key + "'");
  }
  try {
    Vec3 origin{};
    if (j.contains("origin")) {
      const auto o = j.at("origin").get<std::vector<double>>();
      if (o.size() != 3) fail(ErrorCode::Config, "grid: origin must have three entries");
      origin = {o[0], o[1], o[2]};
    }
    return VoxelGrid(j.at("nx").get<std::size_t>(), j.at("ny").get<std::size_t>(),
                     j.at("nz").get<std::size_t>(), j.at("h").get<double>(), origin);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("grid: ") + e.what());
  }
}

std::string grid_to_json(const VoxelGrid& g) {
  json j;
  j["nx"] = g.nx();
  j["ny"] = g.ny();
  j["nz"] = g.nz();
  j["h"] = g.h();
  j["origin"] = {g.origin().x, g.origin().y, g.origin().z};
  return j.dump();
}

VoxelGrid read_grid(const std::string& path) { return grid_from_json(read_file(path)); }

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace geoinv
