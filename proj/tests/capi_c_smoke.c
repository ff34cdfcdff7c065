/* Compiles the public header as C and runs a minimal round trip. */
#include <stdio.h>

#include "ckptzip/ckptzip.h"

int main(void) {
  ckz_checkpoint* c = NULL;
  ckz_checkpoint* d = NULL;
  ckz_encoder* enc = NULL;
  ckz_container* box = NULL;
  ckz_decoder* dec = NULL;
  ckz_config cfg;
  const uint32_t dims[1] = {3};
  const float w[3] = {1.0f, 2.0f, 3.0f};
  const float v[3] = {0.0f, 0.0f, 0.0f};
  const float m[3] = {1e-6f, 1e-6f, 1e-6f};
  int ok = 1;

  ckz_config_default(&cfg);
  cfg.model_kind = CKZ_MODEL_FREQUENCY;
  ok &= ckz_checkpoint_new(1, &c) == CKZ_OK;
  ok &= ckz_checkpoint_add(c, "w", dims, 1, w, v, m) == CKZ_OK;
  ok &= ckz_encoder_new(&cfg, &enc) == CKZ_OK;
  ok &= ckz_encoder_push(enc, c) == CKZ_OK;
  ok &= ckz_encoder_finish(enc, &box) == CKZ_OK;
  ok &= ckz_decoder_new(box, &dec) == CKZ_OK;
  ok &= ckz_decoder_next(dec, &d) == CKZ_OK;
  if (ok) {
    const float* out = NULL;
    ok &= ckz_checkpoint_step(d) == 1;
    ok &= ckz_checkpoint_tensor_data(d, 0, CKZ_ROLE_WEIGHT, &out) == CKZ_OK;
    ok &= out[0] == 1.0f && out[1] == 2.0f && out[2] == 3.0f;
  }
  ckz_checkpoint_free(d);
  d = NULL;
  ok &= ckz_decoder_next(dec, &d) == CKZ_END;

  ckz_decoder_free(dec);
  ckz_container_free(box);
  ckz_encoder_free(enc);
  ckz_checkpoint_free(c);
  printf("%s\n", ok ? "ok" : "failed");
  return ok ? 0 : 1;
}
