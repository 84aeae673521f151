#pragma once

#include <stdexcept>
#include <string>

namespace clab {

// Base of every error the library throws. Callers that only care about
// "something in collapse-lab failed" catch this.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
  public:
    using Error::Error;
};

class InvalidInput : public Error {
  public:
    using Error::Error;
};

// Input is well-formed but numerically degenerate (singular covariance,
// rank-1 data, coincident points).
class DegenerateInput : public Error {
  public:
    using Error::Error;
};

class RankDeficient : public Error {
  public:
    using Error::Error;
};

class DataExhaustion : public Error {
  public:
    DataExhaustion(int generation, const std::string& what)
        : Error("generation " + std::to_string(generation) + ": " + what), generation_(generation) {}
    int generation() const noexcept { return generation_; }

  private:
    int generation_;
};

class InvalidTrace : public Error {
  public:
    using Error::Error;
};

class UsageError : public Error {
  public:
    using Error::Error;
};

class TransportError : public Error {
  public:
    using Error::Error;
};

class ProtocolError : public Error {
  public:
    using Error::Error;
};

class ShortfallError : public Error {
  public:
    ShortfallError(std::size_t needed, std::size_t available, const std::string& what)
        : Error(what + ": needed " + std::to_string(needed) + ", available " + std::to_string(available)),
          needed_(needed), available_(available) {}
    std::size_t needed() const noexcept { return needed_; }
    std::size_t available() const noexcept { return available_; }

  private:
    std::size_t needed_;
    std::size_t available_;
};

// Internal invariant broken; indicates a bug rather than bad input.
class InvariantViolation : public Error {
  public:
    using Error::Error;
};

} // namespace clab
