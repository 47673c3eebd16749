#ifndef PIC_FFI_H
#define PIC_FFI_H

#pragma once

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Values 1 to 5 match the `pic` exit codes.
typedef enum PicStatus {
  PIC_STATUS_OK = 0,
  PIC_STATUS_OTHER = 1,
  PIC_STATUS_IO = 2,
  PIC_STATUS_FORMAT = 3,
  PIC_STATUS_DIGEST = 4,
  PIC_STATUS_CONFIG = 5,
  // A required pointer argument was null.
  PIC_STATUS_NULL_ARGUMENT = 6,
  // The library panicked; the handle involved should be freed.
  PIC_STATUS_PANIC = 7,
} PicStatus;

// Owned byte buffer returned by the library.
typedef struct PicBuffer PicBuffer;

// Frame-by-frame decoder. Owns a copy of the model.
typedef struct PicDecoder PicDecoder;

// Frame-by-frame encoder. Owns a copy of the model.
typedef struct PicEncoder PicEncoder;

// Scene model parameters.
typedef struct PicModel PicModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *pic_last_error_message(void);

// Parses a serialized model.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum PicStatus pic_model_from_bytes(const uint8_t *data, size_t len, struct PicModel **out);

// Reads a model file.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
enum PicStatus pic_model_load(const char *path, struct PicModel **out);

// Serializes a model into a new buffer.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum PicStatus pic_model_to_bytes(const struct PicModel *model, struct PicBuffer **out);

// Frame width, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t pic_model_width(const struct PicModel *model);

// Frame height, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t pic_model_height(const struct PicModel *model);

// Parameter digest carried in every stream coded with this model, or 0
// for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uint64_t pic_model_digest(const struct PicModel *model);

// # Safety
// `model` must be null or a handle not yet freed.
void pic_model_free(struct PicModel *model);

// Codes a whole Y4M clip into a stream container.
//
// # Safety
// `model` must be a live handle; `y4m` must point to `len` readable bytes;
// `out` must be writable.
enum PicStatus pic_encode_y4m(const struct PicModel *model,
                              const uint8_t *y4m,
                              size_t len,
                              int32_t qp,
                              struct PicBuffer **out);

// Decodes a stream container into a Y4M clip.
//
// # Safety
// `model` must be a live handle; `stream` must point to `len` readable
// bytes; `out` must be writable.
enum PicStatus pic_decode_stream(const struct PicModel *model,
                                 const uint8_t *stream,
                                 size_t len,
                                 struct PicBuffer **out);

// Starts a frame-by-frame encoder at base quality `qp`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum PicStatus pic_encoder_new(const struct PicModel *model, int32_t qp, struct PicEncoder **out);

// Codes one I420 frame; `out` receives the frame payload.
//
// # Safety
// `encoder` must be a live handle; `frame` must point to `len` readable
// bytes; `out` must be writable.
enum PicStatus pic_encoder_encode_frame(struct PicEncoder *encoder,
                                        const uint8_t *frame,
                                        size_t len,
                                        struct PicBuffer **out);

// # Safety
// `encoder` must be null or a handle not yet freed.
void pic_encoder_free(struct PicEncoder *encoder);

// Starts a frame-by-frame decoder for payloads coded at base quality `qp`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum PicStatus pic_decoder_new(const struct PicModel *model, int32_t qp, struct PicDecoder **out);

// Decodes one frame payload; `out` receives the I420 picture.
//
// # Safety
// `decoder` must be a live handle; `payload` must point to `len` readable
// bytes; `out` must be writable.
enum PicStatus pic_decoder_decode_frame(struct PicDecoder *decoder,
                                        const uint8_t *payload,
                                        size_t len,
                                        struct PicBuffer **out);

// # Safety
// `decoder` must be null or a handle not yet freed.
void pic_decoder_free(struct PicDecoder *decoder);

// Start of the buffer's bytes, or null for a null handle.
//
// # Safety
// `buf` must be null or a live handle.
const uint8_t *pic_buffer_data(const struct PicBuffer *buf);

// Length in bytes, or 0 for a null handle.
//
// # Safety
// `buf` must be null or a live handle.
size_t pic_buffer_len(const struct PicBuffer *buf);

// # Safety
// `buf` must be null or a handle not yet freed.
void pic_buffer_free(struct PicBuffer *buf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PIC_FFI_H */
