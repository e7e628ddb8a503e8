#pragma once

#include <stdexcept>
#include <string>

namespace mgp {

// Every failure the library reports derives from Error so callers (the CLI in
// particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MGP_DEFINE_ERROR(Name)                 \
  class Name : public Error {                  \
   public:                                     \
    using Error::Error;                        \
  }

MGP_DEFINE_ERROR(DimensionError);  // incompatible tensor shapes
MGP_DEFINE_ERROR(ConfigError);     // invalid hyperparameters
MGP_DEFINE_ERROR(LabelError);      // target id outside [0, K)
MGP_DEFINE_ERROR(AlphabetError);   // character outside the closed alphabet
MGP_DEFINE_ERROR(LengthError);     // sequence does not fit in T slots / image width
MGP_DEFINE_ERROR(CorpusError);     // empty or invalid tokenizer corpus
MGP_DEFINE_ERROR(ProtocolError);   // fusion called with missing inputs
MGP_DEFINE_ERROR(FormatError);     // malformed checkpoint / image / sidecar
MGP_DEFINE_ERROR(IoError);         // file could not be opened or written
MGP_DEFINE_ERROR(NumericError);    // NaN or Inf produced where finite values are required

#undef MGP_DEFINE_ERROR

}  // namespace mgp
