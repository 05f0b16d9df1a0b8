#pragma once

#include <stdexcept>
#include <string>

namespace ntk {

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values produced by quadrature, iteration or a user-supplied function.
class NumericalFailure : public Error {
  public:
    explicit NumericalFailure(const std::string& msg) : Error("numerical failure: " + msg) {}
};

class UnknownPreset : public Error {
  public:
    explicit UnknownPreset(const std::string& name) : Error("unknown preset '" + name + "'") {}
};

// Case 1 dual whose derivative at 1 does not exceed 1: the pole formula has no meaning there.
class InvalidRegime : public Error {
  public:
    explicit InvalidRegime(const std::string& msg) : Error("invalid regime: " + msg) {}
};

class NormalizationUndefined : public Error {
  public:
    explicit NormalizationUndefined(const std::string& msg)
        : Error("normalization undefined: " + msg) {}
};

class UnsupportedLimit : public Error {
  public:
    explicit UnsupportedLimit(const std::string& msg) : Error("unsupported limit: " + msg) {}
};

class IllConditioned : public Error {
  public:
    explicit IllConditioned(const std::string& msg) : Error("ill-conditioned: " + msg) {}
};

class SingularStructure : public Error {
  public:
    explicit SingularStructure(const std::string& msg) : Error("singular structure: " + msg) {}
};

class SpecInvalid : public Error {
  public:
    explicit SpecInvalid(const std::string& msg) : Error("invalid mixture spec: " + msg) {}
};

class MalformedDataset : public Error {
  public:
    MalformedDataset(const std::string& msg, long row)
        : Error("malformed dataset at row " + std::to_string(row) + ": " + msg), row_(row) {}
    long row() const noexcept { return row_; }

  private:
    long row_;
};

class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

}  // namespace ntk
