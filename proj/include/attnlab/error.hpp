#pragma once

#include <stdexcept>
#include <string>

namespace attnlab {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed corpus / embedding / ledger / config text.
class ParseError : public Error {
 public:
  using Error::Error;
};

// File could not be opened.
class IoError : public Error {
 public:
  using Error::Error;
};

// Array shapes or model metadata disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Checkpoint and vocabulary disagree on V (or on the label space).
class VocabularyMismatch : public Error {
 public:
  using Error::Error;
};

// Loss or gradient became NaN/Inf during training.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace attnlab
