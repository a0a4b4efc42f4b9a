#pragma once

#include <stdexcept>
#include <string>

namespace sphdeconv {

//! Out-of-range argument or violated precondition.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class UnsupportedDimension : public std::invalid_argument {
public:
  explicit UnsupportedDimension(int d)
      : std::invalid_argument("unsupported dimension d=" + std::to_string(d)), dim(d) {}
  int dim;
};

class UnsupportedModel : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

//! Requested degree is above the documented stability cap.
class DegreeOverflow : public std::out_of_range {
public:
  DegreeOverflow(int l, int cap)
      : std::out_of_range("degree " + std::to_string(l) + " exceeds stability cap " +
                          std::to_string(cap)),
        degree(l) {}
  int degree;
};

//! A transform block is singular or too ill-conditioned to invert.
class InvertibilityError : public std::runtime_error {
public:
  InvertibilityError(int l, double cond)
      : std::runtime_error("transform block at degree " + std::to_string(l) +
                           " is not safely invertible (condition number " +
                           std::to_string(cond) + ")"),
        degree(l), condition(cond) {}
  int degree;
  double condition;
};

//! Malformed input data (CSV contents, missing columns).
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

//! Invalid or unknown configuration key/value.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace sphdeconv
