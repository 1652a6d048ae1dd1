// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tli {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A vector whose norm is too small to normalize.
class DegenerateVectorError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed input text or file.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure or corrupt/incompatible file.
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training hit a non-finite loss or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace tli
