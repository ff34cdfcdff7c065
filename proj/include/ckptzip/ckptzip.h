/*
 * ckptzip C API.
 *
 * Opaque handles own their memory; every *_new / *_read / *_load has a
 * matching *_free. Functions return ckz_status; on failure a message for the
 * calling thread is available from ckz_last_error().
 */
#ifndef CKPTZIP_CKPTZIP_H_
#define CKPTZIP_CKPTZIP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(CKZ_BUILDING_LIBRARY)
#define CKZ_API __declspec(dllexport)
#else
#define CKZ_API __declspec(dllimport)
#endif
#else
#define CKZ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ckz_status {
  CKZ_OK = 0,
  CKZ_ERR_BAD_MAGIC = 1,
  CKZ_ERR_UNSUPPORTED_VERSION = 2,
  CKZ_ERR_TRUNCATED_PAYLOAD = 3,
  CKZ_ERR_SHAPE_MISMATCH = 4,
  CKZ_ERR_STEP_MISMATCH = 5,
  CKZ_ERR_NON_FINITE_INPUT = 6,
  CKZ_ERR_SYMBOL_OUT_OF_RANGE = 7,
  CKZ_ERR_POSITION_OUT_OF_PLANE = 8,
  CKZ_ERR_NON_FINITE_GRADIENT = 9,
  CKZ_ERR_BITSTREAM_EXHAUSTED = 10,
  CKZ_ERR_HEADER_CORRUPT = 11,
  CKZ_ERR_CHECKSUM_MISMATCH = 12,
  CKZ_ERR_NON_FINITE_LOSS = 13,
  CKZ_ERR_INVALID_ARGUMENT = 14,
  CKZ_ERR_IO = 15,
  CKZ_ERR_VERIFICATION_FAILED = 16,
  CKZ_ERR_INTERNAL = 17,
  /* Not an error: the decoder has no more records. */
  CKZ_END = 100
} ckz_status;

typedef enum ckz_role {
  CKZ_ROLE_WEIGHT = 0,
  CKZ_ROLE_FIRST_MOMENT = 1,
  CKZ_ROLE_SECOND_MOMENT = 2
} ckz_role;

typedef enum ckz_model_kind { CKZ_MODEL_FREQUENCY = 0, CKZ_MODEL_LSTM = 1 } ckz_model_kind;

/* Mirrors the CKZ1 configuration block. Fill with ckz_config_default(). */
typedef struct ckz_config {
  uint8_t bits;         /* bits per symbol, 2..8 */
  float alpha;          /* weight pruning strength */
  float beta;           /* moment pruning strength */
  uint16_t step_size;   /* reference distance in checkpoints */
  ckz_model_kind model_kind;
  uint16_t embed;
  uint16_t hidden;
  uint8_t layers;
  uint16_t batch;
  float lr;
  float beta1;
  float beta2;
  float eps;
  uint64_t seed;
  uint8_t total_log2;   /* coder frequency total, 2^total_log2 */
} ckz_config;

typedef struct ckz_buffer {
  uint8_t* data;
  size_t size;
} ckz_buffer;

typedef struct ckz_record_stats {
  uint64_t step;
  uint64_t symbols;
  uint64_t raw_bytes;
  uint64_t raw_weight_bytes;
  uint64_t compressed_bytes;
  uint64_t payload_bytes;
  uint64_t packed_bytes;
  double ratio;
  double weight_ratio;
  double bits_per_symbol;
} ckz_record_stats;

typedef struct ckz_verify_report {
  int ok;
  uint64_t records;
  char message[512]; /* first failure, empty when ok */
} ckz_verify_report;

typedef struct ckz_train_options {
  uint64_t steps;
  uint64_t checkpoint_every;
  uint64_t seed;
  double lr;
} ckz_train_options;

typedef struct ckz_bench_options {
  ckz_train_options train;
  uint64_t break_every;
  ckz_config codec;     /* model_kind is ignored: both models are run */
  const char* csv_dir;  /* NULL: no CSV output */
} ckz_bench_options;

typedef struct ckz_bench_result {
  uint64_t checkpoints;
  uint64_t raw_bytes;
  uint64_t lstm_bytes;
  uint64_t freq_bytes;
  uint64_t lstm_late_payload_bytes; /* payload over the second half of the series */
  uint64_t freq_late_payload_bytes;
  double baseline_loss;
  double resumed_loss;
  double relative_delta;
} ckz_bench_result;

typedef struct ckz_checkpoint ckz_checkpoint;
typedef struct ckz_container ckz_container;
typedef struct ckz_encoder ckz_encoder;
typedef struct ckz_decoder ckz_decoder;

CKZ_API const char* ckz_version(void);
CKZ_API const char* ckz_status_name(ckz_status status);
CKZ_API const char* ckz_last_error(void);
/* Nonzero for statuses that mean a malformed or corrupted file. */
CKZ_API int ckz_is_format_error(ckz_status status);

CKZ_API void ckz_config_default(ckz_config* config);
CKZ_API void ckz_config_large_scale(ckz_config* config);
CKZ_API void ckz_train_options_default(ckz_train_options* options);
CKZ_API void ckz_buffer_free(ckz_buffer* buffer);

/* Checkpoints */
CKZ_API ckz_status ckz_checkpoint_new(uint64_t step, ckz_checkpoint** out);
CKZ_API void ckz_checkpoint_free(ckz_checkpoint* ckpt);
CKZ_API ckz_status ckz_checkpoint_add(ckz_checkpoint* ckpt, const char* name, const uint32_t* dims, size_t rank,
                                      const float* weight, const float* first_moment, const float* second_moment);
CKZ_API uint64_t ckz_checkpoint_step(const ckz_checkpoint* ckpt);
CKZ_API size_t ckz_checkpoint_tensor_count(const ckz_checkpoint* ckpt);
/* Tensors are indexed in ascending name order. Returned pointers stay valid
 * until the checkpoint is modified or freed. */
CKZ_API ckz_status ckz_checkpoint_tensor_info(const ckz_checkpoint* ckpt, size_t index, const char** name,
                                              size_t* rank, const uint32_t** dims, size_t* elements);
CKZ_API ckz_status ckz_checkpoint_tensor_data(const ckz_checkpoint* ckpt, size_t index, ckz_role role,
                                              const float** data);
CKZ_API int ckz_checkpoint_equal(const ckz_checkpoint* a, const ckz_checkpoint* b);
CKZ_API ckz_status ckz_checkpoint_read(const uint8_t* bytes, size_t size, ckz_checkpoint** out);
CKZ_API ckz_status ckz_checkpoint_write(const ckz_checkpoint* ckpt, ckz_buffer* out);
CKZ_API ckz_status ckz_checkpoint_load(const char* path, ckz_checkpoint** out);
CKZ_API ckz_status ckz_checkpoint_save(const ckz_checkpoint* ckpt, const char* path);

/* Streaming compression */
CKZ_API ckz_status ckz_encoder_new(const ckz_config* config, ckz_encoder** out);
CKZ_API ckz_status ckz_encoder_push(ckz_encoder* enc, const ckz_checkpoint* ckpt);
CKZ_API uint64_t ckz_encoder_digest(const ckz_encoder* enc);
/* Moves the records pushed so far into a new container. */
CKZ_API ckz_status ckz_encoder_finish(ckz_encoder* enc, ckz_container** out);
CKZ_API void ckz_encoder_free(ckz_encoder* enc);

/* Containers */
CKZ_API ckz_status ckz_container_read(const uint8_t* bytes, size_t size, ckz_container** out);
CKZ_API ckz_status ckz_container_write(const ckz_container* c, ckz_buffer* out);
CKZ_API ckz_status ckz_container_load(const char* path, ckz_container** out);
CKZ_API ckz_status ckz_container_save(const ckz_container* c, const char* path);
CKZ_API void ckz_container_free(ckz_container* c);
CKZ_API size_t ckz_container_record_count(const ckz_container* c);
CKZ_API ckz_status ckz_container_config(const ckz_container* c, ckz_config* out);
CKZ_API ckz_status ckz_container_record_stats(const ckz_container* c, size_t index, ckz_record_stats* out);
/* CSV with one row per record; the buffer is NUL-terminated (size excludes it). */
CKZ_API ckz_status ckz_container_stats_csv(const ckz_container* c, ckz_buffer* out);

/* Streaming decompression; the decoder keeps its own copy of the container. */
CKZ_API ckz_status ckz_decoder_new(const ckz_container* c, ckz_decoder** out);
/* CKZ_OK with a new checkpoint in *out, or CKZ_END after the last record. */
CKZ_API ckz_status ckz_decoder_next(ckz_decoder* dec, ckz_checkpoint** out);
CKZ_API uint64_t ckz_decoder_digest(const ckz_decoder* dec);
CKZ_API void ckz_decoder_free(ckz_decoder* dec);

/* Checksums, lossless round trip and state digests. Returns
 * CKZ_ERR_VERIFICATION_FAILED when any check fails. */
CKZ_API ckz_status ckz_verify(const ckz_container* c, ckz_verify_report* report);

/* Toy training run; writes step_<step>.ckpt files into out_dir. */
CKZ_API ckz_status ckz_synth_train(const ckz_train_options* options, const char* out_dir, size_t* written);
/* Toy run compressed with both models plus the resume experiment. */
CKZ_API ckz_status ckz_bench(const ckz_bench_options* options, ckz_bench_result* result);

#ifdef __cplusplus
}
#endif

#endif /* CKPTZIP_CKPTZIP_H_ */
