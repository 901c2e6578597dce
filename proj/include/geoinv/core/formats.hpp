#pragma once

#include <span>
#include <string>
#include <vector>

#include "geoinv/core/forward.hpp"
#include "geoinv/core/grid.hpp"

namespace geoinv {

// Writes to a sibling temporary file and renames it over `path`.
void atomic_write(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

// Binary files: one JSON header line, '\n', then little-endian float64 payload.
//   PVOL1  nx*ny*nz values in x-fastest order
//   SURV1  n rows of (x, y, z)
//   FDAT1  gravity block, magnetic block, then n_survey rows of (x, y, z)
std::string encode_volume(const PropertyVolume& v);
PropertyVolume decode_volume(const std::string& bytes);
void write_volume(const std::string& path, const PropertyVolume& v);
PropertyVolume read_volume(const std::string& path);

std::string encode_survey(const SurveyGeometry& s);
SurveyGeometry decode_survey(const std::string& bytes);
void write_survey(const std::string& path, const SurveyGeometry& s);
SurveyGeometry read_survey(const std::string& path);

std::string encode_field_data(const FieldData& d);
FieldData decode_field_data(const std::string& bytes);
void write_field_data(const std::string& path, const FieldData& d);
FieldData read_field_data(const std::string& path);

// {"nx":..,"ny":..,"nz":..,"h":..,"origin":[x,y,z]}; origin optional.
VoxelGrid grid_from_json(const std::string& text);
std::string grid_to_json(const VoxelGrid& g);
VoxelGrid read_grid(const std::string& path);

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace geoinv
