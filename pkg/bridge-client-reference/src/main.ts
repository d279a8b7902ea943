// Entry point: pick a backend and a transport, then serve until EOF.
//
//   node dist/main.js echo
//   node dist/main.js gaussian --sigma 1.5
//   node dist/main.js gaussian --sigma 1.5 --tcp 7060
//
// Stdio is the default transport; --tcp listens on 127.0.0.1 instead,
// one session per connection, handled sequentially.

import * as net from "node:net";
import process from "node:process";

import { Backend, EchoBackend, GaussianSmoothBackend } from "./backends.js";
import { Session } from "./server.js";

interface ServerArgs {
  backend: "echo" | "gaussian";
  sigma: number;
  port: number | null;
}

function usage(): void {
  console.error("usage: main.js <echo|gaussian> [--sigma S] [--tcp PORT]");
}

function parseArgs(argv: string[]): ServerArgs {
  let backend: string | null = null;
  let sigma = 1.0;
  let port: number | null = null;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--sigma" && argv[i + 1] !== undefined) {
      sigma = parseFloat(argv[++i]);
    } else if (arg === "--tcp" && argv[i + 1] !== undefined) {
      port = parseInt(argv[++i], 10);
    } else if (backend === null && !arg.startsWith("--")) {
      backend = arg;
    } else {
      console.error(`unrecognized argument: ${arg}`);
      usage();
      process.exit(1);
    }
  }
  if (backend !== "echo" && backend !== "gaussian") {
    usage();
    process.exit(1);
  }
  if (!(Number.isFinite(sigma) && sigma >= 0)) {
    console.error(`--sigma must be finite and >= 0, got ${sigma}`);
    process.exit(1);
  }
  if (port !== null && !(Number.isInteger(port) && port > 0 && port < 65536)) {
    console.error(`--tcp needs a port in (0, 65536), got ${port}`);
    process.exit(1);
  }
  return { backend, sigma, port };
}

function makeBackend(args: ServerArgs): Backend {
  if (args.backend === "echo") {
    return new EchoBackend();
  }
  return new GaussianSmoothBackend(args.sigma);
}

function main(): void {
  const args = parseArgs(process.argv.slice(2));
  if (args.port !== null) {
    const server = net.createServer((socket) => {
      const session = new Session(makeBackend(args), (data) => {
        socket.write(data);
      });
      session.start();
      socket.on("data", (chunk) => session.feed(chunk));
      socket.on("error", () => socket.destroy());
    });
    server.listen(args.port, "127.0.0.1");
    return;
  }
  const session = new Session(makeBackend(args), (data) => {
    process.stdout.write(data);
  });
  session.start();
  process.stdin.on("data", (chunk) => session.feed(chunk));
  process.stdin.on("end", () => process.exit(0));
}

main();
