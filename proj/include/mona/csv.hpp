#pragma once

#include "mona/integrator.hpp"

#include <string>
#include <vector>

namespace mona {

// Numeric table; NaN cells are written empty and read back as NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  // Index of a header column; throws InputError when absent.
  std::size_t column(const std::string& name) const;
  std::vector<double> series(const std::string& name) const;
};

// 17 significant digits, '.' decimal separator.
std::string format_number(double v);

// Throws InputError (with the path) on I/O failure or ragged rows.
void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);

// t, <probes...>, H, eps_H; one row per step.
CsvTable trace_table(const TransientResult& result);

// Per-step discrete power balance terms, eps_H absolute and relative to the
// peak supplied power, Newton statistics.
CsvTable audit_table(const TransientResult& result);

// tau, eps_tau, eoc, max_eps_H.
CsvTable eoc_table(const std::vector<ConvergenceRow>& rows);

}  // namespace mona
