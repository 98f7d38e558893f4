/* brm: Bayesian reward modeling laboratory.
 *
 * C interface to the brm core. All functions return a brm_status; results
 * come back through out-parameters. Objects are opaque handles owned by the
 * caller and released with the matching _free function. Error details for
 * the most recent failed call on the current thread are available through
 * brm_last_error().
 */

#ifndef BRM_H
#define BRM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as CLI exit codes. */
typedef enum brm_status {
  BRM_OK = 0,
  BRM_ERR_USAGE = 2,   /* bad arguments, shapes, preconditions, missing files */
  BRM_ERR_SCHEMA = 3,  /* malformed or version-mismatched documents */
  BRM_ERR_NUMERIC = 4  /* factorization/divergence/degenerate-pool failures */
} brm_status;

typedef enum brm_penalty_kind {
  BRM_PENALTY_NONE = 0,
  BRM_PENALTY_STD = 1,
  BRM_PENALTY_VAR = 2
} brm_penalty_kind;

typedef enum brm_activation {
  BRM_ACTIVATION_TANH = 0,
  BRM_ACTIVATION_LINEAR = 1
} brm_activation;

typedef struct brm_net brm_net;
typedef struct brm_dataset brm_dataset;
typedef struct brm_posterior brm_posterior;
typedef struct brm_pool brm_pool;

typedef struct brm_train_config {
  double learning_rate;
  uint64_t steps;
  uint64_t batch_size;
  double prior_precision;
  uint64_t seed;
} brm_train_config;

const char* brm_version(void);

/* Message for the most recent failure on this thread; empty string if none.
 * The pointer stays valid until the next failing brm_* call on the thread. */
const char* brm_last_error(void);

/* ---- scalar operations ---- */

brm_status brm_log_sigmoid(double z, double* out);
brm_status brm_bt_probability(double reward_winner, double reward_loser, double* out);
brm_status brm_kl_bon(uint64_t n, double* out);

/* weights: array of length n_total, ascending proxy-rank order. */
brm_status brm_bon_weights(uint64_t n_total, uint64_t n, double* weights);
brm_status brm_bon_expected_reward(const double* proxy, const double* eval,
                                   uint64_t n_total, uint64_t n, double* out);

brm_status brm_penalized_reward(double mean, double variance, brm_penalty_kind kind,
                                double k, double* out);
brm_status brm_ensemble_penalized_reward(const double* means, const double* variances,
                                         uint64_t n_members, brm_penalty_kind kind,
                                         double k, double* out);
brm_status brm_mean_ensemble_reward(const double* means, uint64_t n_members, double* out);

/* ---- reward networks ---- */

/* Seeded LoRA net: hidden widths, adapter rank (0 disables adapters), head
 * and bias init scales. */
brm_status brm_net_create(uint64_t d_in, const uint64_t* widths, uint64_t n_widths,
                          uint64_t rank, brm_activation activation, double head_scale,
                          double bias_scale, uint64_t seed, brm_net** out);
brm_status brm_net_load(const char* path, brm_net** out);
brm_status brm_net_save(const brm_net* net, const char* path);
void brm_net_free(brm_net* net);

brm_status brm_net_input_dim(const brm_net* net, uint64_t* out);
brm_status brm_net_param_count(const brm_net* net, uint64_t* out);
brm_status brm_net_forward(const brm_net* net, const double* x, uint64_t dim, double* out);

/* ---- preference datasets ---- */

brm_status brm_dataset_load(const char* path, brm_dataset** out);
void brm_dataset_free(brm_dataset* dataset);
brm_status brm_dataset_size(const brm_dataset* dataset, uint64_t* out);
brm_status brm_dataset_dim(const brm_dataset* dataset, uint64_t* out);
brm_status brm_dataset_fingerprint(const brm_dataset* dataset, uint64_t* out);

/* ---- training and Laplace posterior ---- */

/* trace may be NULL or an array of cfg->steps doubles. */
brm_status brm_train_map(const brm_net* net, const brm_dataset* dataset,
                         const brm_train_config* cfg, double* trace, brm_net** out);

brm_status brm_fit_laplace(const brm_net* net, const brm_dataset* dataset, double lambda,
                           brm_posterior** out);
brm_status brm_posterior_load(const char* path, brm_posterior** out);
brm_status brm_posterior_save(const brm_posterior* posterior, const char* path);
void brm_posterior_free(brm_posterior* posterior);

/* Linearized predictive reward: mean and variance at x. The net must carry
 * exactly the parameters the posterior was fit at. */
brm_status brm_predictive_reward(const brm_posterior* posterior, const brm_net* net,
                                 const double* x, uint64_t dim, double* mean,
                                 double* variance);

/* ---- response pools and best-of-n curves ---- */

brm_status brm_pool_load(const char* path, brm_pool** out);
void brm_pool_free(brm_pool* pool);
brm_status brm_pool_num_prompts(const brm_pool* pool, uint64_t* out);

/* Writes a curve CSV (method,k,n,kl,evaluator,value). ranking selects the
 * ordering column ("proxy" or an evaluator name); evaluators is a
 * comma-separated list, or NULL for every column in the pool. */
brm_status brm_bon_curve_to_csv(const brm_pool* pool, const char* ranking,
                                const char* evaluators, const uint64_t* ns, uint64_t n_ns,
                                const char* out_path);

/* ---- file-level commands (CLI backends) ---- */

/* seed_override may be NULL to use the seed in the config file. */
brm_status brm_cmd_gen_data(const char* config_path, const uint64_t* seed_override,
                            const char* out_dir);

brm_status brm_cmd_train_reward(const char* config_path, const char* data_csv,
                                const uint64_t* seed_override, const char* out_net_path,
                                const char* trace_csv_or_null);

/* lambda_override may be NULL: uses the lambda recorded at training time. */
brm_status brm_cmd_fit_laplace(const char* net_path, const char* data_csv,
                               const double* lambda_override, const char* out_posterior_path);

/* Scores a response-features CSV with one or more (net, posterior) members
 * and writes a pool CSV. Carries existing evaluator columns through, adds
 * proxy (member-0 mean), lambda (member-0 variance), penalized columns per
 * (kind, k), and for multiple members ens / la_ens columns. posterior_paths
 * may be NULL when n_penalties is 0. */
brm_status brm_cmd_score_pool(const char* const* net_paths, uint64_t n_members,
                              const char* const* posterior_paths,
                              const char* responses_csv, const brm_penalty_kind* kinds,
                              const double* ks, uint64_t n_penalties,
                              const char* out_pool_csv);

/* ks/ns may be NULL to use the config grids. */
brm_status brm_cmd_experiment(const char* config_path, const uint64_t* seed_override,
                              const double* ks, uint64_t n_ks, const uint64_t* ns,
                              uint64_t n_ns, const char* out_dir);

/* Runs the built-in oracle suite, printing one PASS/FAIL line per check to
 * stdout. fault_flags: bit 0 perturbs a best-of-n weight (negative control).
 * Returns BRM_OK when every check passes, BRM_ERR_NUMERIC otherwise. */
#define BRM_VERIFY_FAULT_BON_WEIGHTS 0x1u
brm_status brm_verify(unsigned fault_flags);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* BRM_H */
