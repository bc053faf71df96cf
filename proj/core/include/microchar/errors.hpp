#pragma once

#include <stdexcept>
#include <string>

namespace microchar {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error { public: using Error::Error; };
class ShapeMismatch : public Error { public: using Error::Error; };
class TooSmall : public Error { public: using Error::Error; };
class NoMarkers : public Error { public: using Error::Error; };
class InvalidSpec : public Error { public: using Error::Error; };
class EmptyDataset : public Error { public: using Error::Error; };
class NoCheckpoint : public Error { public: using Error::Error; };
class MissingCheckpoint : public Error { public: using Error::Error; };
class UnreadableImage : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class LengthMismatch : public Error { public: using Error::Error; };
class InvalidDim : public Error { public: using Error::Error; };
class NotPositiveDefinite : public Error { public: using Error::Error; };
class NoSamples : public Error { public: using Error::Error; };

} // namespace microchar
