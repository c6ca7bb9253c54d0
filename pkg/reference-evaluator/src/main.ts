import { ToyModel } from "./model.js";
import { serve } from "./protocol.js";

function intFlag(args: string[], name: string, fallback: number): number {
  const idx = args.indexOf(name);
  if (idx === -1 || idx + 1 >= args.length) return fallback;
  const value = Number.parseInt(args[idx + 1], 10);
  if (Number.isNaN(value)) {
    console.error(`invalid value for ${name}: ${args[idx + 1]}`);
    process.exit(2);
  }
  return value;
}

const args = process.argv.slice(2);
const model = new ToyModel(
  intFlag(args, "--layers", 3),
  intFlag(args, "--dim", 8),
  intFlag(args, "--seed", 0),
);

serve(model, process.stdin, process.stdout).then(() => process.exit(0));
