#ifndef PRAGNAV_PRAGNAV_H
#define PRAGNAV_PRAGNAV_H

#include <stddef.h>
#include <stdint.h>

#if defined(PRAGNAV_BUILDING_LIBRARY)
#define PRAGNAV_API __attribute__((visibility("default")))
#else
#define PRAGNAV_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pragnav_status {
  PRAGNAV_OK = 0,
  PRAGNAV_E_INVALID_ARGUMENT = 1,
  PRAGNAV_E_NOT_FOUND = 2,
  PRAGNAV_E_INFEASIBLE = 3,
  PRAGNAV_E_CORRUPT = 4,
  PRAGNAV_E_VERSION_MISMATCH = 5,
  PRAGNAV_E_IO = 6,
  PRAGNAV_E_INVALID_STATE = 7,
  PRAGNAV_E_UNSUPPORTED = 8,
  PRAGNAV_E_BUFFER_TOO_SMALL = 9,
  PRAGNAV_E_INTERNAL = 99
} pragnav_status;

typedef struct pragnav_world pragnav_world;
typedef struct pragnav_speaker pragnav_speaker;
typedef struct pragnav_listeners pragnav_listeners;
typedef struct pragnav_server pragnav_server;

PRAGNAV_API const char* pragnav_version(void);
/* Message of the last failed call on this thread; empty if none. */
PRAGNAV_API const char* pragnav_last_error(void);
/* Frees strings returned through char** out-parameters. */
PRAGNAV_API void pragnav_string_free(char* s);

PRAGNAV_API pragnav_status pragnav_world_generate(uint32_t node_count, uint32_t catalog_size, uint64_t seed,
                                                  pragnav_world** out);
PRAGNAV_API pragnav_status pragnav_world_load(const char* path, pragnav_world** out);
PRAGNAV_API pragnav_status pragnav_world_save(const pragnav_world* world, const char* path);
PRAGNAV_API pragnav_status pragnav_world_serialize(const pragnav_world* world, char** out_text);
PRAGNAV_API size_t pragnav_world_node_count(const pragnav_world* world);
PRAGNAV_API pragnav_status pragnav_world_geodesic(const pragnav_world* world, uint32_t a, uint32_t b, double* out);
/* Samples a task; writes up to `cap` node ids and the full length to *out_len. */
PRAGNAV_API pragnav_status pragnav_world_sample_path(const pragnav_world* world, size_t min_len, size_t max_len,
                                                     uint64_t seed, uint32_t* out_path, size_t cap, size_t* out_len);
PRAGNAV_API void pragnav_world_free(pragnav_world* world);

PRAGNAV_API pragnav_status pragnav_speaker_load(const char* path, pragnav_speaker** out);
PRAGNAV_API pragnav_status pragnav_speaker_save(const pragnav_speaker* speaker, const char* path);
PRAGNAV_API pragnav_status pragnav_speaker_set_knobs(pragnav_speaker* speaker, double drop_clause_prob,
                                                     double vocab_confusion_prob);
/* beam_width <= 1 decodes greedily. */
PRAGNAV_API pragnav_status pragnav_speaker_infer(const pragnav_speaker* speaker, const pragnav_world* world,
                                                 const uint32_t* path, size_t path_len, size_t beam_width,
                                                 char** out_text);
PRAGNAV_API pragnav_status pragnav_speaker_sample(const pragnav_speaker* speaker, const pragnav_world* world,
                                                  const uint32_t* path, size_t path_len, uint64_t seed,
                                                  char** out_text);
PRAGNAV_API pragnav_status pragnav_speaker_score(const pragnav_speaker* speaker, const pragnav_world* world,
                                                 const uint32_t* path, size_t path_len, const char* text,
                                                 double* out_logp);
PRAGNAV_API void pragnav_speaker_free(pragnav_speaker* speaker);

PRAGNAV_API pragnav_status pragnav_listeners_load(const char* path, pragnav_listeners** out);
PRAGNAV_API size_t pragnav_listeners_count(const pragnav_listeners* listeners);
PRAGNAV_API pragnav_status pragnav_listener_follow(const pragnav_listeners* listeners, size_t member,
                                                   const pragnav_world* world, const char* text, uint32_t start,
                                                   uint64_t seed, uint32_t* out_path, size_t cap, size_t* out_len);
PRAGNAV_API void pragnav_listeners_free(pragnav_listeners* listeners);

/* Runs a pipeline command (build, train, eval, ppg, gamma, shift, ablate) with
   the JSON config at config_path. The run id is returned through out_run_id
   when it is non-null. */
PRAGNAV_API pragnav_status pragnav_run(const char* command, const char* config_path, uint64_t seed,
                                       const char* out_path, char** out_run_id);

/* Session service over the dataset under data_root (NULL: environment or ./data).
   port 0 binds a free port; the bound port is written to *out_port. */
PRAGNAV_API pragnav_status pragnav_server_start(const char* data_root, const char* host, int port,
                                                pragnav_server** out, int* out_port);
PRAGNAV_API pragnav_status pragnav_server_run(const char* data_root, const char* host, int port);
PRAGNAV_API void pragnav_server_stop(pragnav_server* server);

#ifdef __cplusplus
}
#endif

#endif
