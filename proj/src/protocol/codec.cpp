#include "tablebench/protocol/codec.hpp"

#include "tablebench/protocol/json.hpp"

namespace tb {

template <class Message>
std::string encode_message(const Message& message) {
  return Json(message).dump();
}

template <class Message>
Message decode_message(std::string_view bytes) {
  return from_json_text<Message>(bytes);
}

#define TB_CODEC_INSTANTIATE(T)                          \
  template std::string encode_message<T>(const T&);      \
  template T decode_message<T>(std::string_view);

TB_CODEC_INSTANTIATE(CaptureRequest)
TB_CODEC_INSTANTIATE(ObservationBundle)
TB_CODEC_INSTANTIATE(ActionChunk)
TB_CODEC_INSTANTIATE(EnqueueAck)
TB_CODEC_INSTANTIATE(QueueState)
TB_CODEC_INSTANTIATE(JobSubmission)
TB_CODEC_INSTANTIATE(JobStatus)
TB_CODEC_INSTANTIATE(GradeEvent)
TB_CODEC_INSTANTIATE(RolloutResult)
TB_CODEC_INSTANTIATE(RobotSpec)

#undef TB_CODEC_INSTANTIATE

}  // namespace tb
