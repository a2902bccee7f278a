#pragma once

#include <stdexcept>
#include <string>

namespace mona {

// Malformed input: netlist/mesh syntax, bad parameters, inconsistent topology.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public InputError {
 public:
  ParseError(int line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

// Numerical failure during assembly or time stepping.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mona
