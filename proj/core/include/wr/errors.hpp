#pragma once

#include <stdexcept>
#include <string>

namespace wr {

// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input that could not be parsed at all.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally parseable input that violates a contract
// (duplicate ids, dangling references, empty corpora, bad arguments).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UnknownDocument : public Error {
 public:
  using Error::Error;
};

class EmptyImage : public Error {
 public:
  using Error::Error;
};

// Character bbox collapsed to zero area after clamping to the image.
class DegenerateBox : public Error {
 public:
  using Error::Error;
};

class BadMagic : public Error {
 public:
  using Error::Error;
};

class DimMismatch : public Error {
 public:
  using Error::Error;
};

class TruncatedFile : public Error {
 public:
  using Error::Error;
};

class TooFewSamples : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

// A document contributed zero sampling units.
class EmptyPage : public Error {
 public:
  using Error::Error;
};

// A ranked list with no relevant entry has no average precision.
class NoRelevant : public Error {
 public:
  using Error::Error;
};

class TooFewDescriptors : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class IndexMismatch : public Error {
 public:
  using Error::Error;
};

class CorpusMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

}  // namespace wr
