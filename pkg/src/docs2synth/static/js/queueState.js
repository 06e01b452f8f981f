/**
 * Client-side review queue with optimistic advance.
 *
 * An action removes the current pair immediately; if the server rejects it
 * (409 illegal transition, 422 bad edit, network failure) the pair is
 * restored to the front so the reviewer sees exactly what they acted on.
 */
export class ReviewQueue {
    constructor() {
        this.items = [];
    }
    load(items) {
        this.items = [...items];
    }
    get length() {
        return this.items.length;
    }
    current() {
        return this.items[0] ?? null;
    }
    /** Optimistically remove the current pair; returns it for possible rollback. */
    takeCurrent() {
        return this.items.shift() ?? null;
    }
    /** Roll an optimistic removal back. */
    restore(pair) {
        this.items.unshift(pair);
    }
}
