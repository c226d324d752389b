import { readFileSync } from "node:fs";
import { z } from "zod";

export const backendConfigSchema = z
  .object({
    model: z.string().min(1),
    device: z.string().default("cpu"),
    m: z.number().int().positive(),
    T: z.number().int().positive(),
    // when true, prompt names are forwarded verbatim as conditioning text;
    // when false, only the listed prompts are accepted
    promptPassthrough: z.boolean().default(true),
    prompts: z.array(z.string()).optional(),
  })
  .strict();

export type BackendConfig = z.infer<typeof backendConfigSchema>;

export function loadConfig(path: string): BackendConfig {
  let raw: string;
  try {
    raw = readFileSync(path, "utf-8");
  } catch (e) {
    throw new Error(`cannot read config ${path}: ${(e as Error).message}`);
  }
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (e) {
    throw new Error(`config ${path} is not valid JSON: ${(e as Error).message}`);
  }
  const parsed = backendConfigSchema.safeParse(doc);
  if (!parsed.success) {
    const issues = parsed.error.issues
      .map((i) => `${i.path.join(".") || "(root)"}: ${i.message}`)
      .join("; ");
    throw new Error(`config ${path} is invalid: ${issues}`);
  }
  return parsed.data;
}
