#include "mona/csv.hpp"

#include "mona/error.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mona {

namespace {

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one CSV record, honouring double-quoted fields.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return k;
  throw InputError("CSV has no column '" + name + "'");
}

std::vector<double> CsvTable::series(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const CsvTable& table, const std::string& path) {
  for (const auto& r : table.rows)
    if (r.size() != table.header.size()) throw InputError("CSV rows must match the header width: " + path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path);
  for (std::size_t k = 0; k < table.header.size(); ++k) f << (k ? "," : "") << quote(table.header[k]);
  f << "\r\n";
  for (const auto& r : table.rows) {
    for (std::size_t k = 0; k < r.size(); ++k) f << (k ? "," : "") << format_number(r[k]);
    f << "\r\n";
  }
  f.flush();
  if (!f) throw InputError("I/O error while writing " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(f, line)) throw InputError("empty CSV file " + path);
  table.header = split_record(line);
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_record(line);
    if (fields.size() != table.header.size()) throw InputError("ragged CSV row in " + path);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& s : fields) {
      if (s.empty()) {
        row.push_back(std::nan(""));
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size()) throw InputError("non-numeric CSV cell '" + s + "' in " + path);
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

CsvTable trace_table(const TransientResult& result) {
  CsvTable t;
  t.header.push_back("t");
  for (const auto& name : result.probe_names) t.header.push_back(name);
  t.header.push_back("H");
  t.header.push_back("eps_H");
  for (std::size_t n = 0; n < result.records.size(); ++n) {
    const auto& rec = result.records[n];
    std::vector<double> row{rec.t};
    for (const auto& series : result.probe_values) row.push_back(series[n]);
    row.push_back(rec.energy);
    row.push_back(rec.audit.residual);
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable audit_table(const TransientResult& result) {
  CsvTable t;
  t.header = {"t",        "H",          "dH_dt",          "resistive_loss", "eddy_loss",
              "source_power_I", "source_power_V", "supplied_power", "eps_H",          "eps_H_rel",
              "newton_iters",   "newton_residual", "damping_events"};
  const double peak = result.peak_supplied_power();
  for (const auto& rec : result.records) {
    const auto& a = rec.audit;
    t.rows.push_back({rec.t, rec.energy, a.dH_dt, a.resistive_loss, a.eddy_loss, a.source_power_I, a.source_power_V,
                      a.supplied(), a.residual, peak > 0.0 ? a.residual / peak : std::nan(""),
                      static_cast<double>(rec.newton.iterations), rec.newton.residual_norm,
                      static_cast<double>(rec.newton.damping_events)});
  }
  return t;
}

CsvTable eoc_table(const std::vector<ConvergenceRow>& rows) {
  CsvTable t;
  t.header = {"tau", "eps_tau", "eoc", "max_eps_H"};
  for (const auto& r : rows) t.rows.push_back({r.tau, r.eps_tau, r.eoc, r.max_eps_H});
  return t;
}

}  // namespace mona
