#pragma once

#include <stdexcept>
#include <string>

namespace bmpc {

// Base for every error raised by the library. Subclasses map onto the CLI exit
// codes (see tools/bmpc.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

// Raised when a peer closed its side of a link. Kept distinct so a session
// runner can report the original failure instead of the knock-on disconnect.
class DisconnectError : public TransportError {
 public:
  using TransportError::TransportError;
};

class PhaseError : public Error {
 public:
  using Error::Error;
};

class HandshakeError : public Error {
 public:
  using Error::Error;
};

// Correlated-randomness schedule mismatch, stale mask reuse, bad request.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace bmpc
