#pragma once

#include <stdexcept>
#include <string>

namespace charkb {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg) : Error("ShapeMismatch: " + msg) {}
};

// Cosine similarity against a zero vector means a degenerate embedding; the
// caller must abort the example rather than treat it as similarity 0.
struct ZeroNormVector : Error {
  explicit ZeroNormVector(const std::string& msg) : Error("ZeroNormVector: " + msg) {}
};

struct DisconnectedParameter : Error {
  explicit DisconnectedParameter(const std::string& msg)
      : Error("DisconnectedParameter: " + msg) {}
};

struct EmptyCandidateSet : Error {
  explicit EmptyCandidateSet(const std::string& msg) : Error("EmptyCandidateSet: " + msg) {}
};

struct EmptyCorpus : Error {
  explicit EmptyCorpus(const std::string& msg) : Error("EmptyCorpus: " + msg) {}
};

struct ParseError : Error {
  ParseError(const std::string& file, long line, const std::string& msg)
      : Error("ParseError: " + file + ":" + std::to_string(line) + ": " + msg) {}
};

struct DuplicateEntityId : Error {
  explicit DuplicateEntityId(const std::string& msg) : Error("DuplicateEntityId: " + msg) {}
};

struct EmptyKb : Error {
  explicit EmptyKb(const std::string& msg) : Error("EmptyKb: " + msg) {}
};

struct GoldMissingFromKb : Error {
  explicit GoldMissingFromKb(const std::string& msg) : Error("GoldMissingFromKb: " + msg) {}
};

struct NanLoss : Error {
  explicit NanLoss(const std::string& msg) : Error("NanLoss: " + msg) {}
};

struct InsufficientPool : Error {
  explicit InsufficientPool(const std::string& msg) : Error("InsufficientPool: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("ConfigError: " + msg) {}
};

struct ChecksumMismatch : Error {
  explicit ChecksumMismatch(const std::string& msg) : Error("ChecksumMismatch: " + msg) {}
};

}  // namespace charkb
