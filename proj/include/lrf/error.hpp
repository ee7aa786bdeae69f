#pragma once

#include <stdexcept>
#include <string>

namespace lrf {

/// Base class of every domain error raised by the library. The CLI maps these
/// to exit code 1; anything else is a bug.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class GraphError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

class RankError : public Error {
public:
  using Error::Error;
};

class NumericalError : public Error {
public:
  using Error::Error;
};

class UnsupportedError : public Error {
public:
  using Error::Error;
};

class EvaluatorError : public Error {
public:
  using Error::Error;
};

} // namespace lrf
