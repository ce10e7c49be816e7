#pragma once

// CSV and JSON encodings of grid objects. JSON numbers are written in
// shortest round-trip form, so decode(encode(x)) reproduces x bit for bit.

#include <json.hpp>

#include <filesystem>
#include <string>

#include "feller/grid.hpp"

namespace feller::io {

// Shortest decimal string that parses back to exactly v.
std::string format_double(double v);

// Header "t,value"; one row per lattice point.
std::string to_csv(const GridFunction& f);
// Header "t,mass"; first row is the atom at zero, then one row per cell.
std::string to_csv(const GridMeasure& mu);

nlohmann::json to_json(const GridFunction& f);
nlohmann::json to_json(const GridMeasure& mu);
GridFunction function_from_json(const nlohmann::json& j);
GridMeasure measure_from_json(const nlohmann::json& j);

// Reads a GridMeasure from a .json or two-column .csv file. For CSV the
// grid is inferred from the time column (uniform spacing required).
GridMeasure read_measure(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace feller::io
