#pragma once

#include <string>
#include <string_view>

#include "tablebench/protocol/types.hpp"

namespace tb {

// Canonical wire encoding: UTF-8 JSON, images as base64 PNG. Unknown fields in
// incoming messages are ignored. decode_message throws DecodeError carrying the
// byte position and the expected shape.
template <class Message>
std::string encode_message(const Message& message);

template <class Message>
Message decode_message(std::string_view bytes);

}  // namespace tb
