#pragma once

#include <stdexcept>
#include <string>

namespace dmbn {

// Base class for every error raised by the library. The subclasses map onto
// the CLI exit codes (usage = 1, data/format = 2, numerical = 3).
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
   public:
    using Error::Error;
};

class ValueError : public Error {
   public:
    using Error::Error;
};

class FormatError : public Error {
   public:
    using Error::Error;
};

class NumericalError : public Error {
   public:
    using Error::Error;
};

class UsageError : public Error {
   public:
    using Error::Error;
};

}  // namespace dmbn
