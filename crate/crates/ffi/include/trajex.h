#ifndef TRAJEX_H
#define TRAJEX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call. Values 2 to 9 match the CLI exit codes.
 */
typedef enum TrajexStatus {
  TRAJEX_STATUS_OK = 0,
  TRAJEX_STATUS_NULL_POINTER = 1,
  TRAJEX_STATUS_CONFIG = 2,
  TRAJEX_STATUS_SHAPE = 3,
  TRAJEX_STATUS_HORIZON = 4,
  TRAJEX_STATUS_PROTOCOL = 5,
  TRAJEX_STATUS_DECODE = 6,
  TRAJEX_STATUS_GENERATION = 7,
  TRAJEX_STATUS_IO = 8,
  TRAJEX_STATUS_SERDE = 9,
  TRAJEX_STATUS_BUFFER_TOO_SMALL = 10,
  TRAJEX_STATUS_PANIC = 11,
} TrajexStatus;

typedef enum TrajexFusionMode {
  TRAJEX_FUSION_MODE_WEIGHTED_MEAN = 0,
  TRAJEX_FUSION_MODE_VERBATIM_SUM = 1,
} TrajexFusionMode;

/*
 Opaque trajectory dictionary.
 */
typedef struct TrajexDictionary TrajexDictionary;

/*
 Opaque agent endpoint answering cost queries from its own maps.
 */
typedef struct TrajexEndpoint TrajexEndpoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the next call on
 this thread.
 */
const char *trajex_last_error(void);

/*
 Builds the speed-by-curvature dictionary. Zero arguments take the defaults.

 # Safety
 `out` must be a valid pointer to a handle slot.
 */
enum TrajexStatus trajex_dictionary_new(size_t n_speeds,
                                        size_t n_curvatures,
                                        size_t horizon,
                                        struct TrajexDictionary **out);

/*
 # Safety
 `dict` must come from [`trajex_dictionary_new`] and not be used afterwards.
 */
void trajex_dictionary_free(struct TrajexDictionary *dict);

/*
 # Safety
 `dict` must be a live handle.
 */
uint32_t trajex_dictionary_id(const struct TrajexDictionary *dict);

/*
 # Safety
 `dict` must be a live handle.
 */
size_t trajex_dictionary_len(const struct TrajexDictionary *dict);

/*
 # Safety
 `dict` must be a live handle.
 */
size_t trajex_dictionary_horizon(const struct TrajexDictionary *dict);

/*
 Copies the waypoints of entry `index` as `x0, y0, x1, y1, ...` into `out`, which must
 hold `2 * horizon` doubles.

 # Safety
 `dict` must be a live handle and `out` must point to `cap` writable doubles.
 */
enum TrajexStatus trajex_dictionary_waypoints(const struct TrajexDictionary *dict,
                                              size_t index,
                                              double *out,
                                              size_t cap);

/*
 Writes the 29-byte query of agent `ego_id` at global pose `(x, y, theta)`.

 # Safety
 `dict` must be a live handle; `out` must hold `cap` bytes and `out_len` be writable.
 */
enum TrajexStatus trajex_encode_query(const struct TrajexDictionary *dict,
                                      uint32_t ego_id,
                                      double x,
                                      double y,
                                      double theta,
                                      uint8_t *out,
                                      size_t cap,
                                      size_t *out_len);

/*
 Creates an endpoint from a class forecast on a grid centered on the agent.

 `probs` holds `horizon * height * width * 3` doubles: step-major, then row-major cells,
 each `(p_null, p_ego, p_allo)`. `view` is null or `height * width` bytes, nonzero where
 the agent observed the cell. The agent's own class is ignored when it queries itself.

 # Safety
 `dict` must be a live handle, the arrays must have the stated lengths and `out` must be
 a valid pointer to a handle slot.
 */
enum TrajexStatus trajex_endpoint_new(uint32_t id,
                                      double x,
                                      double y,
                                      double theta,
                                      const struct TrajexDictionary *dict,
                                      size_t width,
                                      size_t height,
                                      double resolution,
                                      size_t horizon,
                                      const double *probs,
                                      const uint8_t *view,
                                      double threshold,
                                      double d_sat,
                                      struct TrajexEndpoint **out);

/*
 # Safety
 `endpoint` must come from [`trajex_endpoint_new`] and not be used afterwards.
 */
void trajex_endpoint_free(struct TrajexEndpoint *endpoint);

/*
 Answers an encoded query with an encoded response. A response with a nonzero status
 byte is still written and still returns `Ok`. When `cap` is too small, `out_len`
 receives the required size.

 # Safety
 `endpoint` must be a live handle, `query` must hold `query_len` bytes, `out` must hold
 `cap` bytes and `out_len` must be writable.
 */
enum TrajexStatus trajex_endpoint_answer(const struct TrajexEndpoint *endpoint,
                                         const uint8_t *query,
                                         size_t query_len,
                                         uint8_t *out,
                                         size_t cap,
                                         size_t *out_len);

/*
 Fuses `count` encoded responses for an `n × t` dictionary. Writes `n` scores (the
 sentinel `DBL_MAX` where no agent had a valid sample) and the `n` trajectory indices in
 ascending score order.

 # Safety
 `responses` and `lens` must hold `count` entries each, every response pointer must hold
 its length in bytes, and `scores` and `order` must each hold `n` elements.
 */
enum TrajexStatus trajex_fuse(const uint8_t *const *responses,
                              const size_t *lens,
                              size_t count,
                              size_t n,
                              size_t t,
                              enum TrajexFusionMode mode,
                              double entropy_floor,
                              double *scores,
                              uint32_t *order);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAJEX_H */
