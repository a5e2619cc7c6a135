#pragma once

#include <stdexcept>
#include <string>

namespace dfopf {

// Error taxonomy. Each class maps to a distinct CLI exit code (see tools/).
//  - ParseError:      malformed input files (JSON syntax, missing keys, bad types)
//  - ValidationError: well-formed input that violates a model rule (cyclic
//                     topology, series length mismatch, infeasible EV itinerary, ...)
//  - InfeasibleError: the optimization problem itself has no feasible point
//  - NumericalError:  a solver failed to converge or produced unusable output
//  - IoError:         filesystem trouble (missing file, unwritable directory)

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dfopf
