#include "intentkit/error.hpp"

namespace intentkit {

const char* to_string(ParseError::Kind kind) {
    switch (kind) {
        case ParseError::Kind::missing_key: return "missing_key";
        case ParseError::Kind::bad_enum: return "bad_enum";
        case ParseError::Kind::malformed: return "malformed";
    }
    return "malformed";
}

}  // namespace intentkit
