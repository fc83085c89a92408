#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace collage {

// Root of the project exception hierarchy. Everything thrown on purpose
// derives from this so callers can catch one type at the boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A caller handed us arguments that violate a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Raw model output is not syntactically parseable (bad JSON, missing fence).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Output parsed but failed schema or semantic validation. Carries every
// violation found, not just the first.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::vector<std::string> violations)
      : Error(what), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Structured-output repair budget exhausted; the plan never became valid.
class MalformedPlan : public Error {
 public:
  MalformedPlan(const std::string& what, std::vector<std::string> violations)
      : Error(what), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Network failure or HTTP 5xx that survived the retry budget.
class TransportError : public Error {
 public:
  using Error::Error;
};

// HTTP 429 that survived the retry budget.
class RateLimited : public Error {
 public:
  using Error::Error;
};

// HTTP 401/403. Never retried; retrying cannot fix a bad credential.
class AuthError : public Error {
 public:
  using Error::Error;
};

// Provider refused to generate for this content. Not retryable.
class ContentRefusal : public Error {
 public:
  using Error::Error;
};

// Provider returned bytes that do not decode as an image.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Embedding vector length disagrees with the provider's declared dimension.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// An embedding has (near-)zero norm and cannot be normalized.
class DegenerateEmbedding : public Error {
 public:
  using Error::Error;
};

// A centered relation matrix has (near-)zero Frobenius norm; the similarity
// ratio is undefined.
class DegenerateStructure : public Error {
 public:
  using Error::Error;
};

// Image dimensions are incompatible with the requested grid split.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Filesystem operation failed (write, rename, missing file).
class IoError : public Error {
 public:
  using Error::Error;
};

// A run directory is internally inconsistent and cannot be resumed.
class CorruptRun : public Error {
 public:
  using Error::Error;
};

}  // namespace collage
