// Fixed-interval polling with an unreachable-API banner state. Run volume
// is small; 2 s polling beats a push-protocol dependency.

export interface PollerHooks<T> {
  load: () => Promise<T>;
  onData: (data: T) => void;
  onError: (message: string) => void;
  onRecovered?: () => void;
}

export class Poller<T> {
  private timer: ReturnType<typeof setInterval> | null = null;
  private down = false;
  private ticking = false;

  constructor(
    private readonly hooks: PollerHooks<T>,
    private readonly intervalMs = 2000,
  ) {}

  start(): void {
    if (this.timer !== null) return;
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  get isDown(): boolean {
    return this.down;
  }

  async tick(): Promise<void> {
    if (this.ticking) return; // a slow request must not stampede
    this.ticking = true;
    try {
      const data = await this.hooks.load();
      if (this.down) {
        this.down = false;
        this.hooks.onRecovered?.();
      }
      this.hooks.onData(data);
    } catch (err) {
      this.down = true;
      this.hooks.onError(err instanceof Error ? err.message : String(err));
    } finally {
      this.ticking = false;
    }
  }
}
