#ifndef TIKTRIAGE_H
#define TIKTRIAGE_H

/* Generated by cbindgen from tiktriage-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible calls.
 */
typedef enum TtStatus {
  TT_STATUS_OK = 0,
  TT_STATUS_NULL_ARGUMENT = 1,
  TT_STATUS_INVALID_ARGUMENT = 2,
  TT_STATUS_PARSE_ERROR = 3,
  TT_STATUS_IO_ERROR = 4,
  TT_STATUS_RUN_ERROR = 5,
} TtStatus;

/**
 * Opaque compiled filter expression.
 */
typedef struct TtFilter TtFilter;

/**
 * Opaque signature database handle.
 */
typedef struct TtSignatureDb TtSignatureDb;

/**
 * One decoded packet passed across the boundary. Addresses are host
 * byte order (192.0.2.1 = 0xC0000201); `ip_proto` is the IANA
 * protocol number; `tcp_seq`/`tcp_flags` are read only for TCP.
 */
typedef struct TtPacket {
  int64_t ts_us;
  uint32_t src_ip;
  uint32_t dst_ip;
  uint8_t ip_proto;
  uint16_t src_port;
  uint16_t dst_port;
  uint8_t tcp_flags;
  uint32_t tcp_seq;
  const uint8_t *payload;
  size_t payload_len;
} TtPacket;

/**
 * Configuration for tt_classify_run. Null paths are treated as
 * absent; at least one of `captures_dir`/`logs_dir` is required.
 * Zero thresholds select the documented defaults.
 */
typedef struct TtClassifyConfig {
  const char *captures_dir;
  const char *logs_dir;
  /**
   * Signature database file; null loads the bundled set.
   */
  const char *signatures_path;
  /**
   * CIDR,country,asn,as_name mapping file; optional.
   */
  const char *attribution_path;
  const char *out_dir;
  uint64_t idle_timeout_secs;
  uint64_t bf_window_secs;
  uint32_t bf_threshold;
  uint32_t workers;
  bool lax;
} TtClassifyConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *tt_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *tt_version(void);

/**
 * Load the signature set bundled with the library. Never fails.
 */
struct TtSignatureDb *tt_sigdb_builtin(void);

/**
 * Load one signature database file. Returns null on failure; inspect
 * tt_last_error_message.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct TtSignatureDb *tt_sigdb_load_file(const char *path, bool strict);

/**
 * Number of signatures in the database; 0 for a null handle.
 *
 * # Safety
 * `db` must be a live handle from this library or null.
 */
size_t tt_sigdb_len(const struct TtSignatureDb *db);

/**
 * Release a signature database handle. A null handle is a no-op.
 *
 * # Safety
 * `db` must come from this library and not be freed twice.
 */
void tt_sigdb_free(struct TtSignatureDb *db);

/**
 * Parse a filter expression. Returns null on error; the message
 * carries a 1-based column position.
 *
 * # Safety
 * `expr` must be a valid NUL-terminated string.
 */
struct TtFilter *tt_filter_parse(const char *expr);

/**
 * Evaluate a compiled filter against one packet: 1 match, 0 no match,
 * -1 null argument.
 *
 * # Safety
 * `filter` must be a live handle; `pkt.payload` must reference
 * `pkt.payload_len` readable bytes (or be null with length 0).
 */
int tt_filter_eval(const struct TtFilter *filter, const struct TtPacket *pkt);

/**
 * Release a filter handle. A null handle is a no-op.
 *
 * # Safety
 * `filter` must come from this library and not be freed twice.
 */
void tt_filter_free(struct TtFilter *filter);

/**
 * Run ingest -> assemble -> classify -> analytics and write the
 * report set to `out_dir`. `out_event_count` and `out_warning_count`
 * may be null.
 *
 * # Safety
 * `cfg` and every non-null string inside it must be valid; out
 * pointers must be writable or null.
 */
enum TtStatus tt_classify_run(const struct TtClassifyConfig *cfg,
                              uint64_t *out_event_count,
                              uint64_t *out_warning_count);

/**
 * Generate a synthetic corpus with its ground-truth manifest.
 * `scenario_mix` is a comma-separated `name=weight` list; null enables
 * every scenario at weight 1. `out_expected_events` may be null.
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings; the out
 * pointer must be writable or null.
 */
enum TtStatus tt_generate_corpus(const char *out_dir,
                                 uint64_t seed,
                                 uint32_t days,
                                 const char *sensors_csv,
                                 const char *scenario_mix,
                                 uint64_t *out_expected_events);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIKTRIAGE_H */
