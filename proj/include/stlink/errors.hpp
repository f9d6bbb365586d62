#pragma once

#include <stdexcept>

namespace stlink {

/// Input too small or too flat to fit a model to.
class DegenerateInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file that is readable but does not have the expected layout.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace stlink
