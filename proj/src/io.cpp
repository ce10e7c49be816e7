#include "feller/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "feller/errors.hpp"

namespace feller::io {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string to_csv(const GridFunction& f) {
  std::string out = "t,value\n";
  for (std::size_t k = 0; k < f.size(); ++k) {
    out += format_double(f.grid().time(k));
    out += ',';
    out += format_double(f[k]);
    out += '\n';
  }
  return out;
}

std::string to_csv(const GridMeasure& mu) {
  std::string out = "t,mass\n";
  auto lattice = mu.lattice();
  for (std::size_t k = 0; k < lattice.size(); ++k) {
    out += format_double(mu.grid().time(k));
    out += ',';
    out += format_double(lattice[k]);
    out += '\n';
  }
  return out;
}

nlohmann::json to_json(const GridFunction& f) {
  return {{"kind", "function"},
          {"horizon", f.grid().horizon()},
          {"dt", f.grid().dt()},
          {"data", std::vector<double>(f.values().begin(), f.values().end())}};
}

nlohmann::json to_json(const GridMeasure& mu) {
  nlohmann::json j = {
      {"kind", "measure"},
      {"horizon", mu.grid().horizon()},
      {"dt", mu.grid().dt()},
      {"atom_at_zero", mu.atom_at_zero()},
      {"data",
       std::vector<double>(mu.cell_mass().begin(), mu.cell_mass().end())}};
  if (mu.is_signed()) j["signed"] = true;
  if (mu.tail_mass() != 0.0) j["tail_mass"] = mu.tail_mass();
  return j;
}

namespace {

Grid grid_from_json(const nlohmann::json& j) {
  if (!j.contains("horizon") || !j.contains("dt") || !j.contains("data")) {
    throw ValidationError("grid JSON needs horizon, dt and data");
  }
  return Grid(j.at("horizon").get<double>(), j.at("dt").get<double>());
}

}  // namespace

GridFunction function_from_json(const nlohmann::json& j) {
  return GridFunction(grid_from_json(j), j.at("data").get<std::vector<double>>());
}

GridMeasure measure_from_json(const nlohmann::json& j) {
  const Grid grid = grid_from_json(j);
  const double atom = j.value("atom_at_zero", 0.0);
  return GridMeasure(grid, atom, j.at("data").get<std::vector<double>>(),
                     j.value("signed", false), j.value("tail_mass", 0.0));
}

GridMeasure read_measure(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    return measure_from_json(nlohmann::json::parse(text));
  }
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);  // header
  std::vector<double> t, m;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw ValidationError("malformed CSV row in " + path.string());
    }
    t.push_back(std::stod(line.substr(0, comma)));
    m.push_back(std::stod(line.substr(comma + 1)));
  }
  if (t.size() < 2 || t.front() != 0.0) {
    throw ValidationError("measure CSV must start at t = 0 with >= 2 rows");
  }
  const Grid grid(t.back(), t[1] - t[0]);
  if (grid.size() != t.size()) {
    throw ValidationError("measure CSV time column is not a uniform grid");
  }
  return GridMeasure::from_lattice(grid, std::move(m));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace feller::io
