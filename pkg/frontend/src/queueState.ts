import type { QAPair } from "./types";

/**
 * Client-side review queue with optimistic advance.
 *
 * An action removes the current pair immediately; if the server rejects it
 * (409 illegal transition, 422 bad edit, network failure) the pair is
 * restored to the front so the reviewer sees exactly what they acted on.
 */
export class ReviewQueue {
  private items: QAPair[] = [];

  load(items: QAPair[]): void {
    this.items = [...items];
  }

  get length(): number {
    return this.items.length;
  }

  current(): QAPair | null {
    return this.items[0] ?? null;
  }

  /** Optimistically remove the current pair; returns it for possible rollback. */
  takeCurrent(): QAPair | null {
    return this.items.shift() ?? null;
  }

  /** Roll an optimistic removal back. */
  restore(pair: QAPair): void {
    this.items.unshift(pair);
  }
}
