#pragma once

#include <stdexcept>
#include <string>

namespace iclsel {

/// Malformed input files, invalid configuration, violated preconditions.
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A pluggable strategy (e.g. a Stage-2 selector) broke its output contract.
class ContractError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Backend timed out or was unreachable. Safe to retry: scoring is stateless.
class BackendError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Backend answered, but the answer violates the wire protocol.
class ProtocolError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace iclsel
