#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cso {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line) : Error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Broken topology: non-manifold boundary, disconnected patch, unshared side.
class StructureError : public Error {
 public:
  using Error::Error;
};

// Argument outside the operation's domain (interior vertex for a patch, u < 0 lift, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class InversionError : public Error {
 public:
  InversionError(const std::string& what, int element) : Error(what), element_(element) {}
  int element() const { return element_; }

 private:
  int element_;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> history = {})
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const { return history_; }

 private:
  std::vector<double> history_;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cso
