#pragma once

#include <stdexcept>
#include <string>

namespace vdrisk {

// Error taxonomy maps onto the CLI exit codes:
//   InvalidInputError / ParseError / ValidationError -> 3 (data validation)
//   NumericalError                                   -> 4 (numerical failure)
//   ScorerProtocolError                              -> 5 (scorer protocol)
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Parse failure in an external file; carries the 1-based data row and the
// offending column name.
class ParseError : public Error {
 public:
  ParseError(std::string message, long row, std::string column)
      : Error(message + " (row " + std::to_string(row) + ", column \"" + column + "\")"),
        row_(row),
        column_(std::move(column)) {}
  long row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  long row_ = 0;
  std::string column_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ScorerProtocolError : public Error {
 public:
  ScorerProtocolError(std::string message, long request_id)
      : Error(message + " (request id " + std::to_string(request_id) + ")"),
        request_id_(request_id) {}
  explicit ScorerProtocolError(std::string message) : Error(std::move(message)) {}
  long request_id() const { return request_id_; }

 private:
  long request_id_ = -1;
};

}  // namespace vdrisk
