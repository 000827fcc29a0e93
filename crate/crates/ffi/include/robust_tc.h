#ifndef ROBUST_TC_H
#define ROBUST_TC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RtcStatus {
  RTC_STATUS_OK = 0,
  RTC_STATUS_NULL_POINTER = 1,
  RTC_STATUS_INVALID_UTF8 = 2,
  RTC_STATUS_SPEC = 3,
  RTC_STATUS_IO = 4,
  RTC_STATUS_DOMAIN = 5,
  RTC_STATUS_INVALID_PATH = 6,
  RTC_STATUS_CONTRACT = 7,
  RTC_STATUS_INFEASIBLE = 8,
  RTC_STATUS_HYPOTHESIS = 9,
  RTC_STATUS_NON_POSITIVE_WEALTH = 10,
  RTC_STATUS_LP = 11,
  RTC_STATUS_PANIC = 12,
} RtcStatus;

typedef enum RtcUtility {
  RTC_UTILITY_LOG = 0,
  RTC_UTILITY_POWER = 1,
} RtcUtility;

/**
 * Opaque market handle.
 */
typedef struct RtcMarket RtcMarket;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a market from its JSON description.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum RtcStatus rtc_market_from_json(const char *json, struct RtcMarket **out);

/**
 * Releases a market handle; null is ignored.
 *
 * # Safety
 * `market` must come from [`rtc_market_from_json`] and not be used again.
 */
void rtc_market_free(struct RtcMarket *market);

/**
 * Number of models and scenarios of a market.
 *
 * # Safety
 * All pointers must be valid.
 */
enum RtcStatus rtc_market_dims(const struct RtcMarket *market,
                               size_t *out_models,
                               size_t *out_scenarios);

/**
 * Finds a consistent price system for model `theta` at cost `lambda`
 * with `Z0 >= delta`; writes the certificate as JSON.
 *
 * # Safety
 * All pointers must be valid; free the output with [`rtc_string_free`].
 */
enum RtcStatus rtc_find_cps(const struct RtcMarket *market,
                            size_t theta,
                            double lambda,
                            double delta,
                            char **out_json);

/**
 * Superhedging price of a claim given as one payoff per scenario.
 *
 * # Safety
 * `claim` must point to `len` doubles; all pointers must be valid.
 */
enum RtcStatus rtc_superhedge_price(const struct RtcMarket *market,
                                    size_t theta,
                                    const double *claim,
                                    size_t len,
                                    double *out_price);

/**
 * Solves the robust problem from endowment `x`; writes the value and a
 * JSON report with the optimal strategy.
 *
 * # Safety
 * All pointers must be valid; free the output with [`rtc_string_free`].
 */
enum RtcStatus rtc_solve_robust(const struct RtcMarket *market,
                                enum RtcUtility kind,
                                double alpha,
                                double x,
                                double tol,
                                double *out_value,
                                char **out_json);

/**
 * Admissibility of a strategy given in the JSON strategy format.
 *
 * # Safety
 * All pointers must be valid.
 */
enum RtcStatus rtc_is_admissible(const struct RtcMarket *market,
                                 const char *strategy_json,
                                 double tol,
                                 bool *out_admissible);

/**
 * Worst-case expected utility of a strategy over the model family.
 *
 * # Safety
 * All pointers must be valid.
 */
enum RtcStatus rtc_robust_value(const struct RtcMarket *market,
                                const char *strategy_json,
                                enum RtcUtility kind,
                                double alpha,
                                double *out_value);

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call on the same thread.
 */
const char *rtc_last_error_message(void);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used again.
 */
void rtc_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ROBUST_TC_H */
